#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "swinvftr/tensor.hpp"

namespace testutil {

using swinvftr::Scalar;
using swinvftr::Shape;
using swinvftr::Tensor;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Scalar> v(swinvftr::numel(shape));
  for (auto& x : v) x = static_cast<Scalar>(u(rng));
  return Tensor::from_data(std::move(shape), std::move(v));
}

inline int64_t randint(std::mt19937_64& rng, int64_t lo, int64_t hi) {
  return std::uniform_int_distribution<int64_t>(lo, hi)(rng);
}

inline double max_abs_diff(std::span<const Scalar> a, std::span<const Scalar> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

inline double max_abs_diff(std::span<const Scalar> a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace testutil
