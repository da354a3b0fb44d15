#include <random>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "swinvftr/losses.hpp"
#include "swinvftr/metrics.hpp"
#include "test_util.hpp"

using namespace swinvftr;
using testutil::randint;

namespace {

std::vector<uint8_t> random_labels(std::mt19937_64& rng, int64_t n, int64_t max_class = 3) {
  std::vector<uint8_t> out(n);
  for (auto& l : out) l = static_cast<uint8_t>(randint(rng, 0, max_class));
  return out;
}

/// Brute-force loss straight from the per-slab definition.
double dice_loss_oracle(const std::vector<double>& p, const std::vector<uint8_t>& labels, int64_t K, double eps) {
  const int64_t n = labels.size();
  double total = 0;
  for (int64_t k = 0; k < K; ++k) {
    double inter = 0, ps = 0, ys = 0;
    for (int64_t i = 0; i < n; ++i) {
      const double y = labels[i] == k;
      inter += p[k * n + i] * y;
      ps += p[k * n + i];
      ys += y;
    }
    total += 1 - (2 * inter + eps) / (ps + ys + eps);
  }
  return total / K;
}

}  // namespace

TEST_CASE("dice loss on a uniform prediction of an all-background volume") {
  const Tensor probs = Tensor::full({1, 4, 4, 4, 4}, 0.25);
  const std::vector<uint8_t> labels(64, 0);
  const Tensor target = one_hot(labels, 4, {4, 4, 4});
  const double class0 = 1.0 - 33.0 / 81.0, other = 1.0 - 1.0 / 17.0;
  CHECK(class0 == doctest::Approx(0.5926).epsilon(1e-4));
  const double loss = dice_loss(probs, target).item();
  CHECK(std::abs(loss - (class0 + 3 * other) / 4) < 1e-6);
  CHECK(std::abs(loss - dice_loss_oracle(std::vector<double>(256, 0.25), labels, 4, 1.0)) < 1e-6);
}

TEST_CASE("dice loss matches the brute-force oracle on random inputs") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t n = randint(rng, 1, 40);
    std::vector<double> p(4 * n);
    for (int64_t i = 0; i < n; ++i) {
      double s = 0;
      for (int64_t k = 0; k < 4; ++k) s += (p[k * n + i] = std::uniform_real_distribution<double>(0.01, 1)(rng));
      for (int64_t k = 0; k < 4; ++k) p[k * n + i] /= s;
    }
    const auto labels = random_labels(rng, n);
    const Tensor probs = Tensor::from_data({1, 4, n}, std::vector<Scalar>(p.begin(), p.end()));
    CHECK(std::abs(dice_loss(probs, one_hot(labels, 4, {n})).item() - dice_loss_oracle(p, labels, 4, 1.0)) < 1e-6);
  }
}

TEST_CASE("dice loss is zero only for the exact one-hot prediction") {
  std::mt19937_64 rng(62);
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t n = randint(rng, 2, 30);
    const auto labels = random_labels(rng, n);
    const Tensor target = one_hot(labels, 4, {n});
    CHECK(dice_loss(target, target).item() == doctest::Approx(0.0).epsilon(1e-7));
    // Move a little probability mass at one voxel to a wrong class.
    std::vector<Scalar> p(target.data().begin(), target.data().end());
    const int64_t i = randint(rng, 0, n - 1), wrong = (labels[i] + randint(rng, 1, 3)) % 4;
    const Scalar delta = std::uniform_real_distribution<double>(1e-3, 1)(rng);
    p[labels[i] * n + i] -= delta;
    p[wrong * n + i] += delta;
    CHECK(dice_loss(Tensor::from_data({1, 4, n}, p), target).item() > 0);
  }
}

TEST_CASE("dice loss averages over batch and classes and checks shapes") {
  const Tensor p = Tensor::full({2, 2, 3}, 0.5);
  const std::vector<uint8_t> labels{0, 0, 0, 1, 1, 1};
  const Tensor t = one_hot(labels, 2, {3}, 2);
  CHECK(t.shape() == Shape{2, 2, 3});
  const double term = 1 - (2 * 1.5 + 1) / (1.5 + 3 + 1), empty = 1 - 1 / (1.5 + 1);
  CHECK(dice_loss(p, t).item() == doctest::Approx((term + empty) / 2));
  CHECK_THROWS_AS(dice_loss(p, Tensor::zeros({2, 2, 4})), ShapeError);
  CHECK_THROWS_AS(one_hot(std::vector<uint8_t>{5}, 4, {1}), ClassError);
}

TEST_CASE("hard dice and IOU examples") {
  const std::vector<uint8_t> a{1, 1, 0, 0}, b{1, 0, 1, 0};
  CHECK(dice_score(a, a, 1) == 1.0);
  CHECK(iou_score(a, a, 1) == 1.0);
  const std::vector<uint8_t> c{0, 0, 1, 1};
  CHECK(dice_score(a, c, 1) == 0.0);
  CHECK(iou_score(a, c, 1) == 0.0);
  // |A| = |B| = 2, |A and B| = 1.
  CHECK(dice_score(a, b, 1) == doctest::Approx(0.5));
  CHECK(iou_score(a, b, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(dice_score(a, b, 3) == 1.0);
  CHECK_THROWS_AS(dice_score(a, b, 4), ClassError);
  CHECK_THROWS_AS(dice_score(a, std::vector<uint8_t>{1, 1, 0}, 1), ShapeError);
  CHECK_THROWS_AS(iou_score(std::vector<uint8_t>{7}, std::vector<uint8_t>{0}, 0), ClassError);
}

TEST_CASE("dice and IOU match set oracles and satisfy their relations") {
  std::mt19937_64 rng(63);
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t n = randint(rng, 1, 300);
    const auto p = random_labels(rng, n), t = random_labels(rng, n);
    double iou_sum = 0;
    for (int cls = 0; cls < 4; ++cls) {
      const oracle::SetOverlap o = oracle::set_overlap(p, t, cls);
      const double d = dice_score(p, t, cls), j = iou_score(p, t, cls);
      CHECK(std::abs(d - o.dice) < 1e-6);
      CHECK(std::abs(j - o.iou) < 1e-6);
      CHECK(d == dice_score(t, p, cls));
      CHECK(j <= d + 1e-12);
      CHECK(std::abs(d - 2 * j / (1 + j)) < 1e-9);
      iou_sum += j;
    }
    CHECK(std::abs(mean_iou(p, t) - iou_sum / 4) < 1e-9);
  }
}

TEST_CASE("SSIM of identical volumes is one and constants follow the closed form") {
  std::mt19937_64 rng(64);
  std::vector<float> a(9 * 8 * 10);
  for (float& x : a) x = std::uniform_real_distribution<float>(0, 1)(rng);
  CHECK(ssim_3d(a, a, {9, 8, 10}) == doctest::Approx(1.0).epsilon(1e-9));
  const double c1 = 0.2, c2 = 0.7, C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  const double closed = (2 * c1 * c2 + C1) * C2 / ((c1 * c1 + c2 * c2 + C1) * C2);
  const std::vector<float> x(512, 0.2f), y(512, 0.7f);
  CHECK(ssim_3d(x, y, {8, 8, 8}) == doctest::Approx(closed).epsilon(1e-6));
  CHECK_THROWS_AS(ssim_3d(x, std::vector<float>(10), {8, 8, 8}), ShapeError);
}

TEST_CASE("SSIM matches the direct windowed oracle") {
  std::mt19937_64 rng(65);
  for (int trial = 0; trial < 20; ++trial) {
    const Dims3 d{randint(rng, 3, 10), randint(rng, 3, 10), randint(rng, 3, 10)};
    const int64_t n = d[0] * d[1] * d[2];
    std::vector<float> a(n), b(n);
    for (int64_t i = 0; i < n; ++i) {
      a[i] = std::uniform_real_distribution<float>(0, 1)(rng);
      b[i] = std::clamp(a[i] + std::normal_distribution<float>(0, 0.2f)(rng), 0.0f, 1.0f);
    }
    const SsimOptions opts{randint(rng, 2, 7)};
    const double ref = oracle::windowed_ssim({a.begin(), a.end()}, {b.begin(), b.end()}, d, opts.window);
    CHECK(std::abs(ssim_3d(a, b, d, opts) - ref) < 1e-6);
  }
}

TEST_CASE("segmentation SSIM averages foreground masks") {
  std::mt19937_64 rng(66);
  const Dims3 d{8, 8, 8};
  const auto p = random_labels(rng, 512), t = random_labels(rng, 512);
  double expect = 0;
  for (uint8_t cls = 1; cls <= 3; ++cls) {
    std::vector<double> mp(512), mt(512);
    for (int i = 0; i < 512; ++i) {
      mp[i] = p[i] == cls;
      mt[i] = t[i] == cls;
    }
    expect += oracle::windowed_ssim(mp, mt, d, 7) / 3;
  }
  CHECK(std::abs(segmentation_ssim(p, t, d) - expect) < 1e-6);
  CHECK(segmentation_ssim(t, t, d) == doctest::Approx(1.0));
}

TEST_CASE("metrics reports stay in range and serialize") {
  std::mt19937_64 rng(67);
  const Dims3 d{8, 8, 8};
  std::vector<MetricsReport> reports;
  for (int i = 0; i < 3; ++i) {
    const auto p = random_labels(rng, 512), t = random_labels(rng, 512);
    const MetricsReport r = compute_metrics(p, t, d);
    for (double x : r.dice) CHECK((x >= 0 && x <= 1));
    CHECK(r.mean_dice_w_bg == doctest::Approx((r.dice[0] + r.dice[1] + r.dice[2] + r.dice[3]) / 4));
    CHECK(r.mean_dice_wo_bg == doctest::Approx((r.dice[1] + r.dice[2] + r.dice[3]) / 3));
    CHECK(r.mean_iou <= r.mean_dice_w_bg + 1e-12);
    CHECK((r.ssim >= -1 && r.ssim <= 1));
    reports.push_back(r);
  }
  const MetricsReport avg = average_reports(reports);
  CHECK(avg.volumes == 3);
  CHECK(avg.dice[2] == doctest::Approx((reports[0].dice[2] + reports[1].dice[2] + reports[2].dice[2]) / 3));
  const auto j = nlohmann::json::parse(avg.to_json());
  CHECK(j["dice"]["SRF"].get<double>() == doctest::Approx(avg.dice[2]));
  CHECK(j["volumes"].get<int64_t>() == 3);
  CHECK(avg.to_text().find("mean_dice_wo_bg=") != std::string::npos);

  const auto t = random_labels(rng, 512);
  const MetricsReport perfect = compute_metrics(t, t, d);
  CHECK(perfect.mean_dice_w_bg == 1.0);
  CHECK(perfect.mean_iou == 1.0);
  CHECK(perfect.ssim == doctest::Approx(1.0));
}
