#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "swinvftr/checkpoint.hpp"
#include "swinvftr/metrics.hpp"
#include "swinvftr/pipeline.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  int64_t epochs = 600;
  int64_t batch_size = 1;
  uint64_t seed = 0;
  int64_t crop_depth = kCropDepth;
  /// Epochs between training-state checkpoints; the final epoch always writes one.
  int64_t checkpoint_every = 10;
  /// Stop after this many optimizer steps; 0 means no limit.
  int64_t max_steps = 0;
  bool augment = true;
  double dice_eps = 1.0;
  /// "constant" or "cosine" (decays to zero over the scheduled steps).
  std::string lr_schedule = "constant";
  double weight_decay = 0.0;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;

  void validate() const;
  KeyValues to_key_values() const;
  /// Applies and consumes recognized keys.
  static TrainConfig from_key_values(KeyValues& kv);
};

/// A training run's full configuration: model keys and training keys in one flat file.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

/// `seed` drives both parameter initialization and data sampling. Unknown keys
/// raise ConfigError.
RunConfig parse_run_config(const KeyValues& kv);
RunConfig read_run_config(const std::string& path);
/// Every accepted key with its default and a one-line description.
std::string default_run_config_text();

struct AdamState {
  int64_t step = 0;
  std::unordered_map<std::string, std::vector<Scalar>> m;
  std::unordered_map<std::string, std::vector<Scalar>> v;
};

/// One bias-corrected Adam update of every parameter in `params` at rate `lr`.
/// Throws OptimizerError naming the first parameter without a gradient.
void adam_step(ParameterStore& params, AdamState& state, const TrainConfig& config, double lr);
inline void adam_step(ParameterStore& params, AdamState& state, const TrainConfig& config) {
  adam_step(params, state, config, config.lr);
}

/// Learning rate for optimizer step `step` (0-based) out of `total`.
double scheduled_lr(const TrainConfig& config, int64_t step, int64_t total);

struct Sample {
  Volume volume;
  LabelVolume labels;
};

std::vector<Sample> load_samples(const std::vector<ManifestEntry>& entries);

struct TrainOptions {
  /// Directory for best.svck, last.svck and train_log.tsv; empty writes nothing.
  std::string out_dir;
  /// Continue from out_dir/last.svck when it exists.
  bool resume = false;
  std::ostream* log = nullptr;
};

struct EpochRecord {
  int64_t epoch = 0;  // 1-based
  int64_t step = 0;   // optimizer steps completed at the end of the epoch
  double mean_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;  // epochs run by this call
  double best_loss = 0.0;
  int64_t steps = 0;
};

inline constexpr const char* kBestCheckpoint = "best.svck";
inline constexpr const char* kLastCheckpoint = "last.svck";
inline constexpr const char* kTrainLog = "train_log.tsv";

/// Trains `model` in place with soft dice loss on random depth crops.
/// Deterministic: every epoch draws from a generator seeded by (seed, epoch).
TrainResult train(SwinVftr& model, const std::vector<Sample>& data, const TrainConfig& config,
                  const TrainOptions& options = {});

/// Writes model weights, Adam moments and progress counters.
void save_training_state(const SwinVftr& model, const AdamState& adam, const TrainConfig& config, int64_t epoch,
                         double best_loss, const std::string& path);

struct PredictOptions {
  int64_t crop_depth = kCropDepth;
  double overlap = kCropOverlap;
  BlendMode blend = BlendMode::Probability;
};

/// Sliding-window prediction over the whole volume.
LabelVolume predict(const SwinVftr& model, const Volume& volume, const PredictOptions& options = {});
void predict_file(const std::string& checkpoint, const std::string& input, const std::string& output,
                  const PredictOptions& options = {});

struct Evaluation {
  MetricsReport mean;
  std::vector<MetricsReport> per_volume;
  double seconds_per_volume = 0.0;
};

Evaluation evaluate(const SwinVftr& model, const std::vector<Sample>& data, const PredictOptions& options = {});
/// Writes `report` as key=value lines and `report`.json alongside.
Evaluation evaluate_file(const std::string& checkpoint, const std::string& manifest, const std::string& report,
                         const PredictOptions& options = {});

}  // namespace swinvftr
