#pragma once

#include <array>
#include <vector>

#include "swinvftr/pipeline.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

struct Ellipsoid {
  std::array<double, 3> center{};  // (h, w, scan)
  std::array<double, 3> radii{};
};

/// Flat Volume-order indices of voxels whose centers satisfy sum(((p - c) / r)^2) <= 1.
std::vector<int64_t> rasterize_ellipsoid(const Ellipsoid& e, Dims3 dims);

/// Blob counts and sizes for the three fluid classes (IRF, SRF, PED).
struct FluidSpec {
  std::array<int64_t, 3> min_blobs{1, 1, 1};
  std::array<int64_t, 3> max_blobs{3, 3, 3};
  std::array<double, 2> radius_h{3.0, 6.0};
  std::array<double, 2> radius_w{4.0, 9.0};
  std::array<double, 2> radius_scan{3.0, 6.0};
  std::array<float, 3> intensity{0.05f, 0.18f, 0.92f};
  float noise_std = 0.02f;

  static FluidSpec none();
};

struct Blob {
  uint8_t label = 0;
  Ellipsoid shape;
};

struct SyntheticCase {
  Volume volume;
  LabelVolume labels;
  std::vector<Blob> blobs;  // in paint order; later blobs overwrite earlier ones
};

/// Retina-like horizontal bands along H with ellipsoidal fluid blobs painted
/// at class-specific intensities. Intensities are quantized to multiples of
/// 1/255 so the volume survives a file round trip unchanged. Every axis of
/// `dims` (H, W, scans) must be at least 16.
SyntheticCase generate_synthetic(uint64_t seed, Dims3 dims, const FluidSpec& spec = {});

}  // namespace swinvftr
