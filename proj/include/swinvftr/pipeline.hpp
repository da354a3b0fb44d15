#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "swinvftr/volume_io.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

using Rng = std::mt19937_64;

inline constexpr int64_t kCropDepth = 32;
inline constexpr double kCropOverlap = 0.25;

/// Depth-axis crop schedule. Volumes with fewer scans than the crop depth are
/// padded by edge replication (pad_before slices in front, the rest behind);
/// starts are in padded coordinates and every interval is [start, start + depth).
struct CropPlan {
  int64_t scans = 0;
  int64_t depth = kCropDepth;
  double overlap = kCropOverlap;
  int64_t stride = 0;
  int64_t pad_before = 0;
  int64_t pad_after = 0;
  std::vector<int64_t> starts;

  int64_t padded_scans() const { return scans + pad_before + pad_after; }
};

/// Stride round(depth * (1 - overlap)); the last window is end-aligned.
CropPlan plan_inference_crops(int64_t scans, int64_t depth = kCropDepth, double overlap = kCropOverlap);

/// Padded-coordinate slice -> source scan (edge replication).
inline int64_t source_scan(int64_t padded, int64_t pad_before, int64_t scans) {
  return std::clamp<int64_t>(padded - pad_before, 0, scans - 1);
}

/// [1, 1, depth, H, W] view of scans [start, start + depth) in padded coordinates.
Tensor crop_tensor(const Volume& v, int64_t start, int64_t depth, int64_t pad_before = 0);
/// Matching labels in [depth, H, W] order.
std::vector<uint8_t> crop_labels(const LabelVolume& l, int64_t start, int64_t depth, int64_t pad_before = 0);

struct TrainingCrop {
  Tensor image;                 // [1, 1, D, H, W]
  std::vector<uint8_t> labels;  // [D, H, W]
  int64_t start = 0;            // first source scan, or -pad_before when padded
  std::vector<uint8_t> real;    // [D]; 0 for replicated pad slices
};

/// Uniform depth start in [0, scans - depth] with full in-plane extent.
/// Short volumes are symmetrically edge-padded instead.
TrainingCrop sample_training_crop(const Volume& v, const LabelVolume& l, int64_t depth, Rng& rng);

enum class BlendMode { Probability, Logit };

/// Sums per-class crop outputs over a full volume and counts per-scan coverage.
class StitchAccumulator {
 public:
  StitchAccumulator(int64_t classes, int64_t height, int64_t width, int64_t scans,
                    BlendMode mode = BlendMode::Probability);

  /// crop is [classes, depth, H, W] (softmax probabilities, or logits in Logit mode);
  /// start is in padded coordinates, slices falling in padding are dropped.
  void add(std::span<const Scalar> crop, int64_t depth, int64_t start, int64_t pad_before = 0);

  /// Mean probabilities [classes, scans, H, W]. Throws CoverageError on uncovered scans.
  std::vector<float> probabilities() const;
  /// Per-voxel argmax of probabilities(); ties go to the lowest class id.
  LabelVolume finalize() const;
  const std::vector<int64_t>& coverage() const { return count_; }

 private:
  int64_t classes_, height_, width_, scans_;
  BlendMode mode_;
  std::vector<double> sum_;  // [classes, scans, H, W]
  std::vector<int64_t> count_;
};

/// Runs `model` ([1, 1, D, H, W] -> [1, K, D, H, W]) over the crop plan and stitches.
StitchAccumulator sliding_window_predict(const Volume& v, int64_t classes,
                                         const std::function<Tensor(const Tensor&)>& model,
                                         int64_t depth = kCropDepth, double overlap = kCropOverlap,
                                         BlendMode mode = BlendMode::Probability);

inline constexpr float kIntensityShift = 10.0f / 255.0f;

/// Adds `shift` and clamps to [0, 1].
template <typename T>
void apply_intensity_shift(std::span<T> voxels, float shift) {
  for (T& x : voxels) x = std::clamp<T>(x + shift, T(0), T(1));
}
/// With probability 0.5 draws a shift uniform in [-10/255, 10/255]; returns the
/// applied shift (0 when skipped). Labels are never touched.
float draw_intensity_shift(Rng& rng);
float augment(Volume& v, Rng& rng);

enum class Interpolation { Nearest, Linear };

/// In-plane (H, W) resampling with half-pixel centers; scans are untouched.
Volume resize_volume(const Volume& v, int64_t height, int64_t width, Interpolation mode = Interpolation::Linear);
LabelVolume resize_labels(const LabelVolume& l, int64_t height, int64_t width);

}  // namespace swinvftr
