#include "swinvftr/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace swinvftr::inline SWINVFTR_PRECISION {

CropPlan plan_inference_crops(int64_t scans, int64_t depth, double overlap) {
  if (scans < 1) throw ShapeError("plan_inference_crops: volume has no scans");
  if (depth < 1) throw ConfigError("plan_inference_crops: crop depth must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("plan_inference_crops: overlap must be in [0, 1)");
  CropPlan plan;
  plan.scans = scans;
  plan.depth = depth;
  plan.overlap = overlap;
  plan.stride = std::max<int64_t>(1, std::llround(static_cast<double>(depth) * (1.0 - overlap)));
  if (scans < depth) {
    plan.pad_before = (depth - scans) / 2;
    plan.pad_after = depth - scans - plan.pad_before;
    plan.starts = {0};
    return plan;
  }
  for (int64_t s = 0;; s = std::min(s + plan.stride, scans - depth)) {
    plan.starts.push_back(s);
    if (s + depth >= scans) break;
  }
  return plan;
}

Tensor crop_tensor(const Volume& v, int64_t start, int64_t depth, int64_t pad_before) {
  const int64_t H = v.height, W = v.width;
  std::vector<Scalar> out(depth * H * W);
  for (int64_t d = 0; d < depth; ++d) {
    const int64_t c = source_scan(start + d, pad_before, v.scans);
    Scalar* dst = out.data() + d * H * W;
    for (int64_t h = 0; h < H; ++h)
      for (int64_t w = 0; w < W; ++w) dst[h * W + w] = v.voxels[v.index(h, w, c)];
  }
  return Tensor::from_data({1, 1, depth, H, W}, std::move(out));
}

std::vector<uint8_t> crop_labels(const LabelVolume& l, int64_t start, int64_t depth, int64_t pad_before) {
  const int64_t H = l.height, W = l.width;
  std::vector<uint8_t> out(depth * H * W);
  for (int64_t d = 0; d < depth; ++d) {
    const int64_t c = source_scan(start + d, pad_before, l.scans);
    for (int64_t h = 0; h < H; ++h)
      for (int64_t w = 0; w < W; ++w) out[(d * H + h) * W + w] = l.labels[l.index(h, w, c)];
  }
  return out;
}

TrainingCrop sample_training_crop(const Volume& v, const LabelVolume& l, int64_t depth, Rng& rng) {
  if (v.dims() != l.dims()) {
    throw ShapeError("volume " + dims_str(v.dims()) + " and labels " + dims_str(l.dims()) + " differ");
  }
  TrainingCrop crop;
  int64_t pad_before = 0, start = 0;
  if (v.scans < depth) {
    pad_before = (depth - v.scans) / 2;
    crop.start = -pad_before;
  } else {
    std::uniform_int_distribution<int64_t> pick(0, v.scans - depth);
    start = pick(rng);
    crop.start = start;
  }
  crop.image = crop_tensor(v, start, depth, pad_before);
  crop.labels = crop_labels(l, start, depth, pad_before);
  crop.real.resize(depth);
  for (int64_t d = 0; d < depth; ++d) {
    const int64_t s = start + d - pad_before;
    crop.real[d] = s >= 0 && s < v.scans;
  }
  return crop;
}

StitchAccumulator::StitchAccumulator(int64_t classes, int64_t height, int64_t width, int64_t scans, BlendMode mode)
    : classes_(classes),
      height_(height),
      width_(width),
      scans_(scans),
      mode_(mode),
      sum_(classes * scans * height * width, 0.0),
      count_(scans, 0) {}

void StitchAccumulator::add(std::span<const Scalar> crop, int64_t depth, int64_t start, int64_t pad_before) {
  const int64_t plane = height_ * width_;
  if (static_cast<int64_t>(crop.size()) != classes_ * depth * plane) {
    throw ShapeError("stitch: crop holds " + std::to_string(crop.size()) + " values, expected " +
                     std::to_string(classes_ * depth * plane));
  }
  for (int64_t d = 0; d < depth; ++d) {
    const int64_t s = start + d - pad_before;
    if (s < 0 || s >= scans_) continue;
    ++count_[s];
    for (int64_t k = 0; k < classes_; ++k) {
      const Scalar* src = crop.data() + (k * depth + d) * plane;
      double* dst = sum_.data() + (k * scans_ + s) * plane;
      for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
  }
}

std::vector<float> StitchAccumulator::probabilities() const {
  const int64_t plane = height_ * width_;
  for (int64_t s = 0; s < scans_; ++s) {
    if (count_[s] == 0) throw CoverageError("stitch: scan " + std::to_string(s) + " received no crop");
  }
  std::vector<float> out(sum_.size());
  std::vector<double> v(classes_);
  for (int64_t s = 0; s < scans_; ++s) {
    for (int64_t i = 0; i < plane; ++i) {
      for (int64_t k = 0; k < classes_; ++k) v[k] = sum_[(k * scans_ + s) * plane + i] / count_[s];
      if (mode_ == BlendMode::Logit) {
        const double m = *std::max_element(v.begin(), v.end());
        double z = 0.0;
        for (double& x : v) z += (x = std::exp(x - m));
        for (double& x : v) x /= z;
      }
      for (int64_t k = 0; k < classes_; ++k) out[(k * scans_ + s) * plane + i] = static_cast<float>(v[k]);
    }
  }
  return out;
}

LabelVolume StitchAccumulator::finalize() const {
  const std::vector<float> probs = probabilities();
  const int64_t plane = height_ * width_;
  LabelVolume out(height_, width_, scans_);
  for (int64_t s = 0; s < scans_; ++s)
    for (int64_t h = 0; h < height_; ++h)
      for (int64_t w = 0; w < width_; ++w) {
        const int64_t i = h * width_ + w;
        int64_t best = 0;
        float best_p = probs[s * plane + i];
        for (int64_t k = 1; k < classes_; ++k) {
          const float p = probs[(k * scans_ + s) * plane + i];
          if (p > best_p) {
            best = k;
            best_p = p;
          }
        }
        out.labels[out.index(h, w, s)] = static_cast<uint8_t>(best);
      }
  return out;
}

StitchAccumulator sliding_window_predict(const Volume& v, int64_t classes,
                                         const std::function<Tensor(const Tensor&)>& model, int64_t depth,
                                         double overlap, BlendMode mode) {
  const CropPlan plan = plan_inference_crops(v.scans, depth, overlap);
  StitchAccumulator acc(classes, v.height, v.width, v.scans, mode);
  NoGradGuard no_grad;
  for (int64_t start : plan.starts) {
    const Tensor out = model(crop_tensor(v, start, depth, plan.pad_before));
    const Shape expected{1, classes, depth, v.height, v.width};
    if (out.shape() != expected) {
      throw ShapeError("sliding_window_predict: model returned " + shape_str(out.shape()) + ", expected " +
                       shape_str(expected));
    }
    acc.add(out.data(), depth, start, plan.pad_before);
  }
  return acc;
}

float draw_intensity_shift(Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  if (!coin(rng)) return 0.0f;
  std::uniform_real_distribution<float> shift(-kIntensityShift, kIntensityShift);
  return shift(rng);
}

float augment(Volume& v, Rng& rng) {
  const float shift = draw_intensity_shift(rng);
  if (shift != 0.0f) apply_intensity_shift(std::span<float>(v.voxels), shift);
  return shift;
}

namespace {

/// Half-pixel source coordinate for output index i when resampling n -> m.
double source_coord(int64_t i, int64_t n, int64_t m) {
  return (static_cast<double>(i) + 0.5) * static_cast<double>(n) / static_cast<double>(m) - 0.5;
}

int64_t nearest_index(int64_t i, int64_t n, int64_t m) {
  return std::clamp<int64_t>(static_cast<int64_t>(std::floor(source_coord(i, n, m) + 0.5)), 0, n - 1);
}

}  // namespace

Volume resize_volume(const Volume& v, int64_t height, int64_t width, Interpolation mode) {
  if (height < 1 || width < 1) throw ShapeError("resize_volume: target must be positive");
  Volume out(height, width, v.scans, v.vendor);
  for (int64_t h = 0; h < height; ++h) {
    for (int64_t w = 0; w < width; ++w) {
      if (mode == Interpolation::Nearest) {
        const int64_t sh = nearest_index(h, v.height, height), sw = nearest_index(w, v.width, width);
        for (int64_t c = 0; c < v.scans; ++c) out.voxels[out.index(h, w, c)] = v.at(sh, sw, c);
        continue;
      }
      const double fh = std::clamp(source_coord(h, v.height, height), 0.0, static_cast<double>(v.height - 1));
      const double fw = std::clamp(source_coord(w, v.width, width), 0.0, static_cast<double>(v.width - 1));
      const int64_t h0 = static_cast<int64_t>(fh), w0 = static_cast<int64_t>(fw);
      const int64_t h1 = std::min(h0 + 1, v.height - 1), w1 = std::min(w0 + 1, v.width - 1);
      const double th = fh - h0, tw = fw - w0;
      for (int64_t c = 0; c < v.scans; ++c) {
        const double top = (1 - tw) * v.at(h0, w0, c) + tw * v.at(h0, w1, c);
        const double bottom = (1 - tw) * v.at(h1, w0, c) + tw * v.at(h1, w1, c);
        out.voxels[out.index(h, w, c)] = static_cast<float>((1 - th) * top + th * bottom);
      }
    }
  }
  return out;
}

LabelVolume resize_labels(const LabelVolume& l, int64_t height, int64_t width) {
  if (height < 1 || width < 1) throw ShapeError("resize_labels: target must be positive");
  LabelVolume out(height, width, l.scans);
  for (int64_t h = 0; h < height; ++h)
    for (int64_t w = 0; w < width; ++w) {
      const int64_t sh = nearest_index(h, l.height, height), sw = nearest_index(w, l.width, width);
      for (int64_t c = 0; c < l.scans; ++c) out.labels[out.index(h, w, c)] = l.at(sh, sw, c);
    }
  return out;
}

}  // namespace swinvftr
