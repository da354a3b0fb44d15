#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "swinvftr/config.hpp"
#include "swinvftr/tensor.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

inline constexpr int64_t kNumClasses = 4;
inline constexpr std::array<const char*, kNumClasses> kClassNames{"BG", "IRF", "SRF", "PED"};

/// Hard dice 2|A∩B| / (|A| + |B|) for one class; 1 when the class is absent from both.
/// Throws ClassError for class ids outside [0, 4) and ShapeError for size mismatch.
double dice_score(std::span<const uint8_t> pred, std::span<const uint8_t> target, int64_t class_id);
/// |A∩B| / |A∪B|; 1 when both are empty.
double iou_score(std::span<const uint8_t> pred, std::span<const uint8_t> target, int64_t class_id);
/// Mean IOU over all four classes, or over the three foreground classes.
double mean_iou(std::span<const uint8_t> pred, std::span<const uint8_t> target, bool include_background = true);

struct SsimOptions {
  int64_t window = 7;
  double k1 = 0.01;
  double k2 = 0.03;
  double range = 1.0;
};

/// Mean local SSIM over every fully contained window^3 cube with uniform weights
/// and population (biased) variances. Volumes smaller than the window along any
/// axis use one global window instead.
double ssim_3d(std::span<const float> a, std::span<const float> b, Dims3 dims, const SsimOptions& options = {});

/// SSIM of segmentations: ssim_3d on the binary mask of each foreground class,
/// averaged over the three classes.
double segmentation_ssim(std::span<const uint8_t> pred, std::span<const uint8_t> target, Dims3 dims,
                         const SsimOptions& options = {});

struct MetricsReport {
  std::array<double, kNumClasses> dice{};
  double mean_dice_wo_bg = 0.0;
  double mean_dice_w_bg = 0.0;
  double mean_iou = 0.0;
  double mean_iou_wo_bg = 0.0;
  double ssim = 0.0;
  int64_t volumes = 0;

  KeyValues to_key_values() const;
  std::string to_text() const;
  std::string to_json() const;
};

MetricsReport compute_metrics(std::span<const uint8_t> pred, std::span<const uint8_t> target, Dims3 dims);
/// Per-volume reports averaged field by field.
MetricsReport average_reports(const std::vector<MetricsReport>& reports);

}  // namespace swinvftr
