#include <cmath>
#include <random>

#include "doctest.h"
#include "swinvftr/ops.hpp"
#include "test_util.hpp"

using namespace swinvftr;
using testutil::max_abs_diff;
using testutil::random_tensor;

TEST_CASE("tensor construction and indexing") {
  Tensor t = Tensor::from_data({2, 3}, {0, 1, 2, 3, 4, 5});
  CHECK(t.numel() == 6);
  CHECK(t.dim(-1) == 3);
  CHECK(t.at({1, 2}) == 5);
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(t.dim(2), AxisError);
  CHECK(Tensor::scalar(2.5f).item() == doctest::Approx(2.5));
}

TEST_CASE("backward accumulates into leaves and frees the graph") {
  Tensor a = Tensor::from_data({3}, {1, 2, 3}, true);
  Tensor b = Tensor::from_data({3}, {4, 5, 6}, true);
  Tensor y = ops::sum(ops::mul(a, b));
  y.backward();
  CHECK(a.grad()[0] == 4);
  CHECK(b.grad()[2] == 3);
  ops::sum(ops::mul(a, b)).backward();
  CHECK(a.grad()[0] == 8);
  CHECK_THROWS_AS(ops::mul(a, b).backward(), ShapeError);
}

TEST_CASE("a value used twice receives both gradient contributions") {
  Tensor a = Tensor::from_data({2}, {3, -2}, true);
  ops::sum(ops::mul(a, a)).backward();
  CHECK(a.grad()[0] == doctest::Approx(6));
  CHECK(a.grad()[1] == doctest::Approx(-4));
}

TEST_CASE("no-grad guard records nothing") {
  Tensor a = Tensor::from_data({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    Tensor y = ops::sum(a);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(grad_enabled());
}

TEST_CASE("non-finite results raise NumericError") {
  Tensor a = Tensor::from_data({1}, {std::numeric_limits<Scalar>::infinity()});
  Tensor b = Tensor::from_data({1}, {0});
  CHECK_THROWS_AS(ops::mul(a, b), NumericError);
}

TEST_CASE("shape mismatches raise ShapeError") {
  CHECK_THROWS_AS(ops::add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
  CHECK_THROWS_AS(ops::reshape(Tensor::zeros({2, 3}), {4, 2}), ShapeError);
  CHECK_THROWS_AS(ops::linear(Tensor::zeros({2, 3}), Tensor::zeros({4, 5})), ShapeError);
  CHECK_THROWS_AS(ops::softmax(Tensor::zeros({2, 3}), 2), AxisError);
}

TEST_CASE("permute matches an index oracle") {
  std::mt19937_64 rng(1);
  Tensor x = random_tensor({2, 3, 4, 5}, rng);
  Tensor y = ops::permute(x, {2, 0, 3, 1});
  REQUIRE(y.shape() == Shape{4, 2, 5, 3});
  for (int64_t a = 0; a < 2; ++a)
    for (int64_t b = 0; b < 3; ++b)
      for (int64_t c = 0; c < 4; ++c)
        for (int64_t d = 0; d < 5; ++d) CHECK(y.at({c, a, d, b}) == x.at({a, b, c, d}));
}

TEST_CASE("concat places parts along the axis") {
  Tensor a = Tensor::from_data({2, 1}, {1, 2});
  Tensor b = Tensor::from_data({2, 2}, {3, 4, 5, 6});
  Tensor c = ops::concat({a, b}, 1);
  CHECK(std::vector<Scalar>(c.data().begin(), c.data().end()) == std::vector<Scalar>{1, 3, 4, 2, 5, 6});
}

TEST_CASE("gather_rows groups rows and zero-fills negative indices") {
  Tensor x = Tensor::from_data({1, 3, 2}, {1, 2, 3, 4, 5, 6});
  const std::vector<int64_t> index{2, -1, 0, 1};
  Tensor y = ops::gather_rows(x, index, 2);
  REQUIRE(y.shape() == Shape{1, 2, 4});
  CHECK(std::vector<Scalar>(y.data().begin(), y.data().end()) == std::vector<Scalar>{5, 6, 0, 0, 1, 2, 3, 4});
  const std::vector<int64_t> bad{3};
  CHECK_THROWS_AS(ops::gather_rows(x, bad, 1), ShapeError);
}

TEST_CASE("linear matches a naive product") {
  std::mt19937_64 rng(2);
  Tensor x = random_tensor({2, 3, 5}, rng), w = random_tensor({4, 5}, rng), b = random_tensor({4}, rng);
  Tensor y = ops::linear(x, w, b);
  std::vector<double> ref(2 * 3 * 4);
  for (int64_t r = 0; r < 6; ++r)
    for (int64_t o = 0; o < 4; ++o) {
      double s = b.data()[o];
      for (int64_t i = 0; i < 5; ++i) s += static_cast<double>(x.data()[r * 5 + i]) * w.data()[o * 5 + i];
      ref[r * 4 + o] = s;
    }
  CHECK(max_abs_diff(y.data(), ref) < 1e-5);
}

TEST_CASE("layer_norm and instance_norm match direct statistics") {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({3, 8}, rng, -2, 3);
  Tensor g = random_tensor({8}, rng), b = random_tensor({8}, rng);
  Tensor y = ops::layer_norm(x, g, b);
  for (int64_t r = 0; r < 3; ++r) {
    double mean = 0, var = 0;
    for (int64_t i = 0; i < 8; ++i) mean += x.at({r, i}) / 8.0;
    for (int64_t i = 0; i < 8; ++i) var += std::pow(x.at({r, i}) - mean, 2) / 8.0;
    for (int64_t i = 0; i < 8; ++i) {
      const double ref = (x.at({r, i}) - mean) / std::sqrt(var + 1e-5) * g.data()[i] + b.data()[i];
      CHECK(y.at({r, i}) == doctest::Approx(ref).epsilon(1e-5));
    }
  }

  Tensor v = random_tensor({2, 3, 2, 2, 3}, rng, 0, 4);
  Tensor gi = random_tensor({3}, rng), bi = random_tensor({3}, rng);
  Tensor z = ops::instance_norm(v, gi, bi);
  const int64_t len = 12;
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t c = 0; c < 3; ++c) {
      const Scalar* src = v.data().data() + (n * 3 + c) * len;
      double mean = 0, var = 0;
      for (int64_t i = 0; i < len; ++i) mean += src[i] / double(len);
      for (int64_t i = 0; i < len; ++i) var += std::pow(src[i] - mean, 2) / double(len);
      for (int64_t i = 0; i < len; ++i) {
        const double ref = (src[i] - mean) / std::sqrt(var + 1e-5) * gi.data()[c] + bi.data()[c];
        CHECK(z.data()[(n * 3 + c) * len + i] == doctest::Approx(ref).epsilon(1e-5));
      }
    }
}

TEST_CASE("gelu uses the tanh approximation") {
  Tensor x = Tensor::from_data({4}, {-2, 0, 1, 3});
  Tensor y = ops::gelu(x);
  for (int64_t i = 0; i < 4; ++i) {
    const double v = x.data()[i];
    const double ref = 0.5 * v * (1 + std::tanh(std::sqrt(2 / M_PI) * (v + 0.044715 * v * v * v)));
    CHECK(y.data()[i] == doctest::Approx(ref).epsilon(1e-6));
  }
  CHECK(y.data()[2] == doctest::Approx(0.841192).epsilon(1e-5));
}

TEST_CASE("softmax rows are positive and sum to one") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t n = testutil::randint(rng, 1, 4), k = testutil::randint(rng, 1, 6), m = testutil::randint(rng, 1, 5);
    Tensor x = random_tensor({n, k, m}, rng, -30, 30);
    Tensor y = ops::softmax(x, 1);
    for (int64_t a = 0; a < n; ++a)
      for (int64_t c = 0; c < m; ++c) {
        double s = 0;
        for (int64_t b = 0; b < k; ++b) {
          CHECK(y.at({a, b, c}) >= 0);
          s += y.at({a, b, c});
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
      }
  }
}

TEST_CASE("mean and sum accumulate in double") {
  Tensor x = Tensor::full({1 << 20}, 0.1f);
  CHECK(ops::mean(x).item() == doctest::Approx(0.1).epsilon(1e-6));
}
