#include "swinvftr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace swinvftr::inline SWINVFTR_PRECISION {

namespace {

constexpr float kVitreous = 0.28f;
constexpr float kChoroid = 0.36f;
constexpr std::array<float, 6> kLayers{0.46f, 0.62f, 0.40f, 0.56f, 0.72f, 0.80f};

}  // namespace

FluidSpec FluidSpec::none() {
  FluidSpec s;
  s.min_blobs = {0, 0, 0};
  s.max_blobs = {0, 0, 0};
  return s;
}

std::vector<int64_t> rasterize_ellipsoid(const Ellipsoid& e, Dims3 dims) {
  std::vector<int64_t> out;
  std::array<int64_t, 3> lo, hi;
  for (int a = 0; a < 3; ++a) {
    if (!(e.radii[a] > 0.0)) throw ConfigError("ellipsoid radii must be positive");
    lo[a] = std::max<int64_t>(0, static_cast<int64_t>(std::ceil(e.center[a] - e.radii[a])));
    hi[a] = std::min<int64_t>(dims[a] - 1, static_cast<int64_t>(std::floor(e.center[a] + e.radii[a])));
  }
  for (int64_t h = lo[0]; h <= hi[0]; ++h) {
    const double dh = (h - e.center[0]) / e.radii[0];
    for (int64_t w = lo[1]; w <= hi[1]; ++w) {
      const double dw = (w - e.center[1]) / e.radii[1];
      for (int64_t c = lo[2]; c <= hi[2]; ++c) {
        const double dc = (c - e.center[2]) / e.radii[2];
        if (dh * dh + dw * dw + dc * dc <= 1.0) out.push_back((h * dims[1] + w) * dims[2] + c);
      }
    }
  }
  return out;
}

SyntheticCase generate_synthetic(uint64_t seed, Dims3 dims, const FluidSpec& spec) {
  for (int64_t d : dims) {
    if (d < 16) throw ConfigError("synthetic volumes need every axis >= 16, got " + dims_str(dims));
  }
  for (int k = 0; k < 3; ++k) {
    if (spec.min_blobs[k] < 0 || spec.max_blobs[k] < spec.min_blobs[k]) {
      throw ConfigError("synthetic: bad blob count range for class " + std::to_string(k + 1));
    }
  }
  const auto [H, W, C] = dims;
  Rng rng(seed);
  auto uniform = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };

  SyntheticCase out{Volume(H, W, C, Vendor::Synthetic), LabelVolume(H, W, C), {}};

  // Layer boundaries follow a gentle per-scan tilt and an in-plane sinusoid.
  const double phase = uniform(0.0, 2.0 * std::numbers::pi);
  const double tilt = uniform(-0.03, 0.03);
  const double top = 0.2 * H, bottom = 0.9 * H;
  for (int64_t w = 0; w < W; ++w) {
    for (int64_t c = 0; c < C; ++c) {
      const double offset = 0.03 * H * std::sin(2.0 * std::numbers::pi * w / W + phase) + tilt * H * (c - C / 2.0) / C;
      for (int64_t h = 0; h < H; ++h) {
        const double y = h - offset;
        float v;
        if (y < top) {
          v = kVitreous;
        } else if (y >= bottom) {
          v = kChoroid;
        } else {
          const auto band = static_cast<size_t>((y - top) / (bottom - top) * kLayers.size());
          v = kLayers[std::min(band, kLayers.size() - 1)];
        }
        out.volume.voxels[out.volume.index(h, w, c)] = v;
      }
    }
  }

  for (int k = 0; k < 3; ++k) {
    const int64_t count = std::uniform_int_distribution<int64_t>(spec.min_blobs[k], spec.max_blobs[k])(rng);
    for (int64_t b = 0; b < count; ++b) {
      Ellipsoid e;
      const std::array<std::array<double, 2>, 3> ranges{spec.radius_h, spec.radius_w, spec.radius_scan};
      for (int a = 0; a < 3; ++a) {
        const double cap = (dims[a] - 1) / 2.0;
        e.radii[a] = std::min(uniform(ranges[a][0], ranges[a][1]), cap);
      }
      const double h_lo = std::max(e.radii[0], 0.25 * H), h_hi = std::min(H - 1 - e.radii[0], 0.85 * H);
      e.center[0] = h_lo < h_hi ? uniform(h_lo, h_hi) : (H - 1) / 2.0;
      e.center[1] = uniform(e.radii[1], W - 1 - e.radii[1]);
      e.center[2] = uniform(e.radii[2], C - 1 - e.radii[2]);
      const auto label = static_cast<uint8_t>(k + 1);
      for (int64_t i : rasterize_ellipsoid(e, dims)) {
        out.volume.voxels[i] = spec.intensity[k];
        out.labels.labels[i] = label;
      }
      out.blobs.push_back({label, e});
    }
  }

  std::normal_distribution<float> noise(0.0f, spec.noise_std);
  for (float& v : out.volume.voxels) {
    const float x = spec.noise_std > 0.0f ? v + noise(rng) : v;
    v = std::nearbyint(std::clamp(x, 0.0f, 1.0f) * 255.0f) / 255.0f;
  }
  return out;
}

}  // namespace swinvftr
