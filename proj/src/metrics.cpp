#include "swinvftr/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>

#include "json.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

namespace {

void check_pair(std::span<const uint8_t> pred, std::span<const uint8_t> target, int64_t class_id) {
  if (pred.size() != target.size()) {
    throw ShapeError("label volumes differ in size: " + std::to_string(pred.size()) + " vs " +
                     std::to_string(target.size()));
  }
  if (class_id < 0 || class_id >= kNumClasses) throw ClassError("unknown class id " + std::to_string(class_id));
}

struct Overlap {
  int64_t a = 0, b = 0, both = 0;
};

Overlap count_overlap(std::span<const uint8_t> pred, std::span<const uint8_t> target, int64_t class_id) {
  check_pair(pred, target, class_id);
  Overlap o;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= kNumClasses || target[i] >= kNumClasses) {
      throw ClassError("label " + std::to_string(std::max(pred[i], target[i])) + " at voxel " + std::to_string(i) +
                       " is not a known class");
    }
    const bool a = pred[i] == class_id, b = target[i] == class_id;
    o.a += a;
    o.b += b;
    o.both += a && b;
  }
  return o;
}

/// Inclusive-prefix sums with a zero border: S[z+1][y+1][x+1] = sum over [0..z][0..y][0..x].
class IntegralVolume {
 public:
  IntegralVolume(Dims3 dims, const std::function<double(int64_t)>& value)
      : d_(dims[0] + 1), h_(dims[1] + 1), w_(dims[2] + 1), s_(d_ * h_ * w_, 0.0) {
    for (int64_t z = 1; z < d_; ++z)
      for (int64_t y = 1; y < h_; ++y)
        for (int64_t x = 1; x < w_; ++x) {
          const int64_t src = ((z - 1) * dims[1] + (y - 1)) * dims[2] + (x - 1);
          s_[at(z, y, x)] = value(src) + s_[at(z - 1, y, x)] + s_[at(z, y - 1, x)] + s_[at(z, y, x - 1)] -
                            s_[at(z - 1, y - 1, x)] - s_[at(z - 1, y, x - 1)] - s_[at(z, y - 1, x - 1)] +
                            s_[at(z - 1, y - 1, x - 1)];
        }
  }

  /// Sum over the cube [z, z+n) x [y, y+n) x [x, x+n).
  double box(int64_t z, int64_t y, int64_t x, int64_t nz, int64_t ny, int64_t nx) const {
    const int64_t z1 = z + nz, y1 = y + ny, x1 = x + nx;
    return s_[at(z1, y1, x1)] - s_[at(z, y1, x1)] - s_[at(z1, y, x1)] - s_[at(z1, y1, x)] + s_[at(z, y, x1)] +
           s_[at(z, y1, x)] + s_[at(z1, y, x)] - s_[at(z, y, x)];
  }

 private:
  int64_t at(int64_t z, int64_t y, int64_t x) const { return (z * h_ + y) * w_ + x; }
  int64_t d_, h_, w_;
  std::vector<double> s_;
};

double ssim_from_moments(double n, double sa, double sb, double saa, double sbb, double sab, double c1, double c2) {
  const double ma = sa / n, mb = sb / n;
  const double va = saa / n - ma * ma, vb = sbb / n - mb * mb, cov = sab / n - ma * mb;
  return ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

}  // namespace

double dice_score(std::span<const uint8_t> pred, std::span<const uint8_t> target, int64_t class_id) {
  const Overlap o = count_overlap(pred, target, class_id);
  if (o.a + o.b == 0) return 1.0;
  return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.a + o.b);
}

double iou_score(std::span<const uint8_t> pred, std::span<const uint8_t> target, int64_t class_id) {
  const Overlap o = count_overlap(pred, target, class_id);
  const int64_t uni = o.a + o.b - o.both;
  if (uni == 0) return 1.0;
  return static_cast<double>(o.both) / static_cast<double>(uni);
}

double mean_iou(std::span<const uint8_t> pred, std::span<const uint8_t> target, bool include_background) {
  double total = 0.0;
  const int64_t first = include_background ? 0 : 1;
  for (int64_t c = first; c < kNumClasses; ++c) total += iou_score(pred, target, c);
  return total / static_cast<double>(kNumClasses - first);
}

double ssim_3d(std::span<const float> a, std::span<const float> b, Dims3 dims, const SsimOptions& options) {
  const int64_t total = dims[0] * dims[1] * dims[2];
  if (static_cast<int64_t>(a.size()) != total || static_cast<int64_t>(b.size()) != total) {
    throw ShapeError("ssim_3d: inputs do not match dims " + dims_str(dims));
  }
  if (total == 0) throw ShapeError("ssim_3d: empty volume");
  const double c1 = (options.k1 * options.range) * (options.k1 * options.range);
  const double c2 = (options.k2 * options.range) * (options.k2 * options.range);
  const int64_t w = options.window;

  if (dims[0] < w || dims[1] < w || dims[2] < w) {
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (int64_t i = 0; i < total; ++i) {
      const double x = a[i], y = b[i];
      sa += x;
      sb += y;
      saa += x * x;
      sbb += y * y;
      sab += x * y;
    }
    return ssim_from_moments(static_cast<double>(total), sa, sb, saa, sbb, sab, c1, c2);
  }

  // Centering on the global means keeps the moment sums well conditioned.
  double mean_a = 0, mean_b = 0;
  for (int64_t i = 0; i < total; ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= total;
  mean_b /= total;
  auto ca = [&](int64_t i) { return a[i] - mean_a; };
  auto cb = [&](int64_t i) { return b[i] - mean_b; };
  const IntegralVolume ia(dims, ca), ib(dims, cb);
  const IntegralVolume iaa(dims, [&](int64_t i) { return ca(i) * ca(i); });
  const IntegralVolume ibb(dims, [&](int64_t i) { return cb(i) * cb(i); });
  const IntegralVolume iab(dims, [&](int64_t i) { return ca(i) * cb(i); });

  const double n = static_cast<double>(w * w * w);
  double acc = 0.0;
  int64_t count = 0;
  for (int64_t z = 0; z + w <= dims[0]; ++z)
    for (int64_t y = 0; y + w <= dims[1]; ++y)
      for (int64_t x = 0; x + w <= dims[2]; ++x) {
        const double sa = ia.box(z, y, x, w, w, w), sb = ib.box(z, y, x, w, w, w);
        const double saa = iaa.box(z, y, x, w, w, w), sbb = ibb.box(z, y, x, w, w, w);
        const double sab = iab.box(z, y, x, w, w, w);
        // Shift the local means back; variances and covariance are shift invariant.
        const double ma = sa / n, mb = sb / n;
        const double va = std::max(0.0, saa / n - ma * ma), vb = std::max(0.0, sbb / n - mb * mb);
        const double cov = sab / n - ma * mb;
        const double mua = ma + mean_a, mub = mb + mean_b;
        acc += ((2.0 * mua * mub + c1) * (2.0 * cov + c2)) / ((mua * mua + mub * mub + c1) * (va + vb + c2));
        ++count;
      }
  return acc / static_cast<double>(count);
}

double segmentation_ssim(std::span<const uint8_t> pred, std::span<const uint8_t> target, Dims3 dims,
                         const SsimOptions& options) {
  check_pair(pred, target, 0);
  std::vector<float> ma(pred.size()), mb(pred.size());
  double total = 0.0;
  for (int64_t c = 1; c < kNumClasses; ++c) {
    for (size_t i = 0; i < pred.size(); ++i) {
      ma[i] = pred[i] == c ? 1.0f : 0.0f;
      mb[i] = target[i] == c ? 1.0f : 0.0f;
    }
    total += ssim_3d(ma, mb, dims, options);
  }
  return total / static_cast<double>(kNumClasses - 1);
}

MetricsReport compute_metrics(std::span<const uint8_t> pred, std::span<const uint8_t> target, Dims3 dims) {
  for (uint8_t v : pred)
    if (v >= kNumClasses) throw ClassError("prediction holds class " + std::to_string(v));
  for (uint8_t v : target)
    if (v >= kNumClasses) throw ClassError("target holds class " + std::to_string(v));
  MetricsReport r;
  for (int64_t c = 0; c < kNumClasses; ++c) r.dice[c] = dice_score(pred, target, c);
  r.mean_dice_wo_bg = (r.dice[1] + r.dice[2] + r.dice[3]) / 3.0;
  r.mean_dice_w_bg = (r.dice[0] + r.dice[1] + r.dice[2] + r.dice[3]) / 4.0;
  r.mean_iou = mean_iou(pred, target, true);
  r.mean_iou_wo_bg = mean_iou(pred, target, false);
  r.ssim = segmentation_ssim(pred, target, dims);
  r.volumes = 1;
  return r;
}

MetricsReport average_reports(const std::vector<MetricsReport>& reports) {
  MetricsReport out;
  if (reports.empty()) return out;
  const double n = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    for (int64_t c = 0; c < kNumClasses; ++c) out.dice[c] += r.dice[c] / n;
    out.mean_dice_wo_bg += r.mean_dice_wo_bg / n;
    out.mean_dice_w_bg += r.mean_dice_w_bg / n;
    out.mean_iou += r.mean_iou / n;
    out.mean_iou_wo_bg += r.mean_iou_wo_bg / n;
    out.ssim += r.ssim / n;
  }
  out.volumes = static_cast<int64_t>(reports.size());
  return out;
}

KeyValues MetricsReport::to_key_values() const {
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  KeyValues kv;
  for (int64_t c = 0; c < kNumClasses; ++c) kv[std::string("dice_") + kClassNames[c]] = fmt(dice[c]);
  kv["mean_dice_wo_bg"] = fmt(mean_dice_wo_bg);
  kv["mean_dice_w_bg"] = fmt(mean_dice_w_bg);
  kv["mean_iou"] = fmt(mean_iou);
  kv["mean_iou_wo_bg"] = fmt(mean_iou_wo_bg);
  kv["ssim"] = fmt(ssim);
  kv["volumes"] = std::to_string(volumes);
  return kv;
}

std::string MetricsReport::to_text() const { return canonical_key_values(to_key_values()); }

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  for (int64_t c = 0; c < kNumClasses; ++c) j["dice"][kClassNames[c]] = dice[c];
  j["mean_dice_wo_bg"] = mean_dice_wo_bg;
  j["mean_dice_w_bg"] = mean_dice_w_bg;
  j["mean_iou"] = mean_iou;
  j["mean_iou_wo_bg"] = mean_iou_wo_bg;
  j["ssim"] = ssim;
  j["volumes"] = volumes;
  return j.dump(2) + "\n";
}

}  // namespace swinvftr
