#pragma once

#include <cmath>

#include "swinvftr/ops.hpp"
#include "swinvftr/parameter.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

/// Weight init std for linear projections.
inline constexpr Scalar kWeightInitStd = 0.02f;

/// Convolution weights: std 1/sqrt(3 * fan_in), the variance of PyTorch's default conv init.
inline InitSpec conv_init(int64_t fan_in) {
  return InitSpec::trunc_normal(static_cast<Scalar>(1.0 / std::sqrt(3.0 * static_cast<double>(fan_in))));
}

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out] or undefined

  Linear() = default;
  Linear(const Scope& scope, int64_t in, int64_t out, bool with_bias = true) {
    weight = scope.add("weight", {out, in}, InitSpec::trunc_normal(kWeightInitStd));
    if (with_bias) bias = scope.add("bias", {out}, InitSpec::zeros());
  }
  Tensor operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }
};

struct LayerNorm {
  Tensor gamma, beta;

  LayerNorm() = default;
  LayerNorm(const Scope& scope, int64_t channels) {
    gamma = scope.add("weight", {channels}, InitSpec::ones());
    beta = scope.add("bias", {channels}, InitSpec::zeros());
  }
  Tensor operator()(const Tensor& x) const { return ops::layer_norm(x, gamma, beta); }
};

struct InstanceNorm {
  Tensor gamma, beta;

  InstanceNorm() = default;
  InstanceNorm(const Scope& scope, int64_t channels) {
    gamma = scope.add("weight", {channels}, InitSpec::ones());
    beta = scope.add("bias", {channels}, InitSpec::zeros());
  }
  Tensor operator()(const Tensor& x) const { return ops::instance_norm(x, gamma, beta); }
};

struct Conv3d {
  Tensor weight;  // [cout, cin/groups, kd, kh, kw]
  Tensor bias;
  ops::Conv3dOptions options;

  Conv3d() = default;
  Conv3d(const Scope& scope, int64_t cin, int64_t cout, Dims3 kernel, ops::Conv3dOptions opts = {},
         bool with_bias = true)
      : options(opts) {
    weight = scope.add("weight", {cout, cin / opts.groups, kernel[0], kernel[1], kernel[2]},
                       conv_init(cin / opts.groups * kernel[0] * kernel[1] * kernel[2]));
    if (with_bias) bias = scope.add("bias", {cout}, InitSpec::zeros());
  }
  Tensor operator()(const Tensor& x) const { return ops::conv3d(x, weight, bias, options); }
};

struct ConvTranspose3d {
  Tensor weight;  // [cin, cout, 2, 2, 2]
  Tensor bias;

  ConvTranspose3d() = default;
  ConvTranspose3d(const Scope& scope, int64_t cin, int64_t cout) {
    weight = scope.add("weight", {cin, cout, 2, 2, 2}, conv_init(cout * 8));
    bias = scope.add("bias", {cout}, InitSpec::zeros());
  }
  Tensor operator()(const Tensor& x) const { return ops::conv_transpose3d(x, weight, bias); }
};

/// Same-padding options for an odd kernel `k` with dilation `d` along all axes.
inline ops::Conv3dOptions same_padding(int64_t k, int64_t d = 1, int64_t groups = 1) {
  const int64_t p = d * (k - 1) / 2;
  return {{1, 1, 1}, {p, p, p}, {d, d, d}, groups};
}

}  // namespace swinvftr
