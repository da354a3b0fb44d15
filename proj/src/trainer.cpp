#include "swinvftr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "swinvftr/losses.hpp"
#include "swinvftr/ops.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

namespace {

constexpr const char* kAdamM = "adam.m.";
constexpr const char* kAdamV = "adam.v.";

template <typename F>
void take(KeyValues& kv, const char* key, F&& apply) {
  auto it = kv.find(key);
  if (it == kv.end()) return;
  apply(it->first, it->second);
  kv.erase(it);
}

uint64_t epoch_seed(uint64_t seed, int64_t epoch) {
  const uint64_t words[2] = {seed, static_cast<uint64_t>(epoch)};
  return fnv1a64(words, sizeof words);
}

double elapsed(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(eps_adam > 0.0)) throw ConfigError("eps_adam must be positive");
  if (epochs < 1) throw ConfigError("epochs must be at least 1, got " + std::to_string(epochs));
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1, got " + std::to_string(batch_size));
  if (crop_depth < 1) throw ConfigError("crop_depth must be positive");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be at least 1");
  if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
  if (!(dice_eps > 0.0)) throw ConfigError("dice_eps must be positive");
  if (lr_schedule != "constant" && lr_schedule != "cosine") {
    throw ConfigError("lr_schedule must be constant or cosine, got " + lr_schedule);
  }
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (grad_clip < 0.0) throw ConfigError("grad_clip must be non-negative");
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv;
  kv["lr"] = kv::from_double(lr);
  kv["beta1"] = kv::from_double(beta1);
  kv["beta2"] = kv::from_double(beta2);
  kv["eps_adam"] = kv::from_double(eps_adam);
  kv["epochs"] = std::to_string(epochs);
  kv["batch_size"] = std::to_string(batch_size);
  kv["seed"] = std::to_string(seed);
  kv["crop_depth"] = std::to_string(crop_depth);
  kv["checkpoint_every"] = std::to_string(checkpoint_every);
  kv["max_steps"] = std::to_string(max_steps);
  kv["augment"] = kv::from_bool(augment);
  kv["dice_eps"] = kv::from_double(dice_eps);
  kv["lr_schedule"] = lr_schedule;
  kv["weight_decay"] = kv::from_double(weight_decay);
  kv["grad_clip"] = kv::from_double(grad_clip);
  return kv;
}

TrainConfig TrainConfig::from_key_values(KeyValues& kv) {
  TrainConfig c;
  take(kv, "lr", [&](auto& k, auto& v) { c.lr = kv::to_double(k, v); });
  take(kv, "beta1", [&](auto& k, auto& v) { c.beta1 = kv::to_double(k, v); });
  take(kv, "beta2", [&](auto& k, auto& v) { c.beta2 = kv::to_double(k, v); });
  take(kv, "eps_adam", [&](auto& k, auto& v) { c.eps_adam = kv::to_double(k, v); });
  take(kv, "epochs", [&](auto& k, auto& v) { c.epochs = kv::to_int(k, v); });
  take(kv, "batch_size", [&](auto& k, auto& v) { c.batch_size = kv::to_int(k, v); });
  take(kv, "seed", [&](auto& k, auto& v) { c.seed = kv::to_uint(k, v); });
  take(kv, "crop_depth", [&](auto& k, auto& v) { c.crop_depth = kv::to_int(k, v); });
  take(kv, "checkpoint_every", [&](auto& k, auto& v) { c.checkpoint_every = kv::to_int(k, v); });
  take(kv, "max_steps", [&](auto& k, auto& v) { c.max_steps = kv::to_int(k, v); });
  take(kv, "augment", [&](auto& k, auto& v) { c.augment = kv::to_bool(k, v); });
  take(kv, "dice_eps", [&](auto& k, auto& v) { c.dice_eps = kv::to_double(k, v); });
  take(kv, "lr_schedule", [&](auto&, auto& v) { c.lr_schedule = v; });
  take(kv, "weight_decay", [&](auto& k, auto& v) { c.weight_decay = kv::to_double(k, v); });
  take(kv, "grad_clip", [&](auto& k, auto& v) { c.grad_clip = kv::to_double(k, v); });
  return c;
}

RunConfig parse_run_config(const KeyValues& input) {
  KeyValues kv = input;
  RunConfig run;
  run.train = TrainConfig::from_key_values(kv);
  if (input.count("seed")) kv["seed"] = input.at("seed");
  run.model = ModelConfig::from_key_values(kv);
  if (!kv.empty()) {
    std::string keys;
    for (const auto& [k, v] : kv) keys += (keys.empty() ? "" : ", ") + k;
    throw ConfigError("unknown config keys: " + keys);
  }
  run.model.validate();
  run.train.validate();
  return run;
}

RunConfig read_run_config(const std::string& path) { return parse_run_config(read_key_values(path)); }

std::string default_run_config_text() {
  const ModelConfig m;
  const TrainConfig t;
  const KeyValues mk = m.to_key_values(false), tk = t.to_key_values();
  const std::vector<std::pair<std::string, std::string>> model_doc{
      {"in_channels", "input channels of the volume"},
      {"num_classes", "output classes including background"},
      {"embed_dim", "token width C after the patch partition"},
      {"patch_size", "edge of the cubic patch partition"},
      {"stages", "patch-merging steps; total downsampling is patch_size * 2^stages"},
      {"depth", "swin sub-blocks per stage (even)"},
      {"heads", "attention heads per stage, bottleneck last"},
      {"window", "attention window (one value or d,h,w)"},
      {"use_va", "volumetric attention skip blocks (false: residual conv skips)"},
      {"use_mrf", "multi-receptive-field block in place of the MLP"},
      {"full_resolution", "extra full-resolution skip from the raw input"},
      {"relative_bias", "learned relative position bias in window attention"},
      {"mrf_mode", "MRF convolutions: sequence (1-D over the token order) or spatial (3-D)"},
      {"mlp_ratio", "hidden width multiplier of the MLP (use_mrf = false)"},
  };
  const std::vector<std::pair<std::string, std::string>> train_doc{
      {"seed", "parameter initialization and sampling seed"},
      {"lr", "Adam learning rate"},
      {"beta1", "Adam first-moment decay"},
      {"beta2", "Adam second-moment decay"},
      {"eps_adam", "Adam denominator epsilon"},
      {"epochs", "passes over the training set"},
      {"batch_size", "crops per optimizer step"},
      {"crop_depth", "B-scans per training and inference crop"},
      {"checkpoint_every", "epochs between last.svck writes"},
      {"max_steps", "stop after this many optimizer steps (0 = no limit)"},
      {"augment", "random intensity shift of +-10/255 with probability 0.5"},
      {"dice_eps", "smoothing term of the dice loss"},
      {"lr_schedule", "constant or cosine"},
      {"weight_decay", "decoupled weight decay (0 = off)"},
      {"grad_clip", "global gradient-norm clip (0 = off)"},
  };
  std::ostringstream os;
  os << "# model\n";
  for (const auto& [k, doc] : model_doc) os << "# " << doc << "\n" << k << " = " << mk.at(k) << "\n";
  os << "\n# training\n";
  for (const auto& [k, doc] : train_doc) os << "# " << doc << "\n" << k << " = " << tk.at(k) << "\n";
  return os.str();
}

double scheduled_lr(const TrainConfig& config, int64_t step, int64_t total) {
  if (config.lr_schedule == "cosine" && total > 0) {
    const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
    return 0.5 * config.lr * (1.0 + std::cos(std::numbers::pi * t));
  }
  return config.lr;
}

void adam_step(ParameterStore& params, AdamState& state, const TrainConfig& config, double lr) {
  for (const Parameter& p : params.params()) {
    if (!p.tensor.has_grad()) throw OptimizerError("parameter " + p.name + " has no gradient");
  }
  ++state.step;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (Parameter& p : params.params()) {
    const auto g = p.tensor.grad();
    auto w = p.tensor.mutable_data();
    auto& m = state.m[p.name];
    auto& v = state.v[p.name];
    if (m.size() != w.size()) m.assign(w.size(), 0.0f);
    if (v.size() != w.size()) v.assign(w.size(), 0.0f);
    for (size_t i = 0; i < w.size(); ++i) {
      const double mi = b1 * m[i] + (1.0 - b1) * g[i];
      const double vi = b2 * v[i] + (1.0 - b2) * static_cast<double>(g[i]) * g[i];
      m[i] = static_cast<Scalar>(mi);
      v[i] = static_cast<Scalar>(vi);
      double wi = w[i];
      if (config.weight_decay > 0.0) wi -= lr * config.weight_decay * wi;
      wi -= lr * (mi / c1) / (std::sqrt(vi / c2) + config.eps_adam);
      w[i] = static_cast<Scalar>(wi);
    }
  }
}

std::vector<Sample> load_samples(const std::vector<ManifestEntry>& entries) {
  std::vector<Sample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    Sample s{read_volume(e.image), read_labels(e.label)};
    if (s.volume.dims() != s.labels.dims()) {
      throw ShapeError(e.image + " is " + dims_str(s.volume.dims()) + " but " + e.label + " is " +
                       dims_str(s.labels.dims()));
    }
    out.push_back(std::move(s));
  }
  return out;
}

void save_training_state(const SwinVftr& model, const AdamState& adam, const TrainConfig& config, int64_t epoch,
                         double best_loss, const std::string& path) {
  CheckpointData data;
  data.meta = model.config().to_key_values();
  for (const auto& [k, v] : config.to_key_values()) data.meta["train." + k] = v;
  data.meta["state.epoch"] = std::to_string(epoch);
  data.meta["state.step"] = std::to_string(adam.step);
  data.meta["state.best_loss"] = kv::from_double(best_loss);
  for (const Parameter& p : model.parameters().params()) data.records.emplace_back(p.name, p.tensor);
  for (const Parameter& p : model.parameters().params()) {
    auto it = adam.m.find(p.name);
    if (it == adam.m.end()) continue;
    data.records.emplace_back(kAdamM + p.name, Tensor::from_data(p.tensor.shape(), it->second));
    data.records.emplace_back(kAdamV + p.name, Tensor::from_data(p.tensor.shape(), adam.v.at(p.name)));
  }
  write_checkpoint_data(data, path);
}

TrainResult train(SwinVftr& model, const std::vector<Sample>& data, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  if (data.empty()) throw ConfigError("train: no training samples");
  const int64_t classes = model.config().num_classes;
  const int64_t batches_per_epoch = (static_cast<int64_t>(data.size()) + config.batch_size - 1) / config.batch_size;
  int64_t total_steps = config.epochs * batches_per_epoch;
  if (config.max_steps > 0) total_steps = std::min(total_steps, config.max_steps);

  namespace fs = std::filesystem;
  const bool write = !options.out_dir.empty();
  if (write) fs::create_directories(options.out_dir);
  auto path_of = [&](const char* name) { return (fs::path(options.out_dir) / name).string(); };

  AdamState adam;
  TrainResult result;
  result.best_loss = std::numeric_limits<double>::infinity();
  int64_t start_epoch = 0;
  if (options.resume && write && fs::exists(path_of(kLastCheckpoint))) {
    const CheckpointData state = read_checkpoint_data(path_of(kLastCheckpoint));
    load_weights_into(model, state);
    for (const auto& [name, t] : state.records) {
      if (name.rfind(kAdamM, 0) == 0) adam.m[name.substr(7)].assign(t.data().begin(), t.data().end());
      if (name.rfind(kAdamV, 0) == 0) adam.v[name.substr(7)].assign(t.data().begin(), t.data().end());
    }
    start_epoch = kv::to_int("state.epoch", state.meta.at("state.epoch"));
    adam.step = kv::to_int("state.step", state.meta.at("state.step"));
    result.best_loss = kv::to_double("state.best_loss", state.meta.at("state.best_loss"));
  }

  std::ofstream log_file;
  if (write) {
    const bool fresh = start_epoch == 0 || !fs::exists(path_of(kTrainLog));
    log_file.open(path_of(kTrainLog), fresh ? std::ios::trunc : std::ios::app);
    if (!log_file) throw IoError("cannot write " + path_of(kTrainLog));
    if (fresh) log_file << "epoch\tstep\tmean_dice_loss\n";
  }

  ParameterStore& params = model.parameters();
  for (int64_t epoch = start_epoch; epoch < config.epochs && adam.step < total_steps; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(epoch_seed(config.seed, epoch));
    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    int64_t loss_count = 0;
    for (size_t first = 0; first < order.size() && adam.step < total_steps; first += config.batch_size) {
      const size_t last = std::min(order.size(), first + static_cast<size_t>(config.batch_size));
      const Scalar weight = Scalar(1) / static_cast<Scalar>(last - first);
      params.zero_grad();
      for (size_t b = first; b < last; ++b) {
        const Sample& s = data[order[b]];
        TrainingCrop crop = sample_training_crop(s.volume, s.labels, config.crop_depth, rng);
        if (config.augment) {
          const float shift = draw_intensity_shift(rng);
          if (shift != 0.0f) apply_intensity_shift(crop.image.mutable_data(), shift);
        }
        const Tensor probs = model.forward(crop.image);
        const Shape spatial{config.crop_depth, s.volume.height, s.volume.width};
        const Tensor target = one_hot(crop.labels, classes, spatial);
        const Tensor loss = dice_loss(probs, target, static_cast<Scalar>(config.dice_eps));
        loss_sum += loss.item();
        ++loss_count;
        ops::scale(loss, weight).backward();
      }
      if (config.grad_clip > 0.0) {
        double norm2 = 0.0;
        for (const Parameter& p : params.params())
          for (Scalar g : p.tensor.grad()) norm2 += static_cast<double>(g) * g;
        const double norm = std::sqrt(norm2);
        if (norm > config.grad_clip) {
          const auto f = static_cast<Scalar>(config.grad_clip / norm);
          for (Parameter& p : params.params())
            for (Scalar& g : p.tensor.mutable_grad()) g *= f;
        }
      }
      adam_step(params, adam, config, scheduled_lr(config, adam.step, total_steps));
    }

    EpochRecord rec{epoch + 1, adam.step, loss_sum / static_cast<double>(loss_count), elapsed(t0)};
    result.epochs.push_back(rec);
    const bool improved = rec.mean_loss < result.best_loss;
    if (improved) result.best_loss = rec.mean_loss;
    const bool final_epoch = epoch + 1 == config.epochs || adam.step >= total_steps;
    if (write) {
      log_file << rec.epoch << '\t' << rec.step << '\t' << std::setprecision(9) << rec.mean_loss << '\n';
      log_file.flush();
      if (improved) save_checkpoint(model, path_of(kBestCheckpoint));
      if (final_epoch || rec.epoch % config.checkpoint_every == 0) {
        save_training_state(model, adam, config, rec.epoch, result.best_loss, path_of(kLastCheckpoint));
      }
    }
    if (options.log) {
      *options.log << "epoch " << rec.epoch << " step " << rec.step << " loss " << std::fixed
                   << std::setprecision(5) << rec.mean_loss << " (" << std::setprecision(1) << rec.seconds
                   << " s)" << std::defaultfloat << std::endl;
    }
  }
  params.zero_grad();
  result.steps = adam.step;
  return result;
}

LabelVolume predict(const SwinVftr& model, const Volume& volume, const PredictOptions& options) {
  const bool logits = options.blend == BlendMode::Logit;
  auto run = [&](const Tensor& crop) {
    return logits ? model.decode_logits(model.encode(crop)) : model.forward(crop);
  };
  return sliding_window_predict(volume, model.config().num_classes, run, options.crop_depth, options.overlap,
                                options.blend)
      .finalize();
}

void predict_file(const std::string& checkpoint, const std::string& input, const std::string& output,
                  const PredictOptions& options) {
  const SwinVftr model = load_checkpoint(checkpoint);
  const Volume volume = read_volume(input);
  write_labels(predict(model, volume, options), output, volume.vendor);
}

Evaluation evaluate(const SwinVftr& model, const std::vector<Sample>& data, const PredictOptions& options) {
  Evaluation ev;
  const auto t0 = std::chrono::steady_clock::now();
  for (const Sample& s : data) {
    const LabelVolume pred = predict(model, s.volume, options);
    ev.per_volume.push_back(compute_metrics(pred.labels, s.labels.labels, s.labels.dims()));
  }
  ev.seconds_per_volume = data.empty() ? 0.0 : elapsed(t0) / static_cast<double>(data.size());
  ev.mean = average_reports(ev.per_volume);
  return ev;
}

Evaluation evaluate_file(const std::string& checkpoint, const std::string& manifest, const std::string& report,
                         const PredictOptions& options) {
  const SwinVftr model = load_checkpoint(checkpoint);
  const Evaluation ev = evaluate(model, load_samples(read_manifest(manifest)), options);
  std::ofstream text(report, std::ios::trunc);
  if (!text) throw IoError("cannot write report " + report);
  text << ev.mean.to_text();
  std::ofstream json(report + ".json", std::ios::trunc);
  if (!json) throw IoError("cannot write report " + report + ".json");
  json << ev.mean.to_json();
  return ev;
}

}  // namespace swinvftr
