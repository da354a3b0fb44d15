#pragma once

#include <span>
#include <vector>

#include "swinvftr/tensor.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION::ops {

// Elementwise, same-shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar factor);

/// Sum / mean of all elements as a [1] tensor, accumulated in double.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& order);
Tensor concat(const std::vector<Tensor>& parts, int axis);

/// Row gather over a [N, R, C] tensor. `index` holds M*group source rows;
/// output row m of batch n is the concatenation of rows index[m*group + j],
/// j = 0..group-1, giving [N, M, group*C]. A negative index yields zeros.
Tensor gather_rows(const Tensor& x, std::span<const int64_t> index, int64_t group);

/// y = x W^T + b over the last axis; W is [out, in], b is [out] or undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

/// Normalizes over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps = 1e-5f);

/// Normalizes each (n, c) slab of an [N, C, ...] tensor over its spatial extent.
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps = 1e-5f);

/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& x);
inline constexpr Scalar kGeluSqrt2OverPi = 0.7978845608028654;
inline constexpr Scalar kGeluCubic = 0.044715;

Tensor softmax(const Tensor& x, int axis);

struct Conv3dOptions {
  Dims3 stride{1, 1, 1};
  Dims3 padding{0, 0, 0};
  Dims3 dilation{1, 1, 1};
  int64_t groups = 1;
};

/// input [N, Cin, D, H, W], weight [Cout, Cin/groups, kd, kh, kw], bias [Cout] or undefined.
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias = {},
              const Conv3dOptions& options = {});

/// Transposed convolution; only kernel == stride == 2 is supported.
/// weight [Cin, Cout, 2, 2, 2], bias [Cout] or undefined.
Tensor conv_transpose3d(const Tensor& input, const Tensor& weight, const Tensor& bias = {},
                        int64_t stride = 2, int64_t kernel = 2);

}  // namespace swinvftr::ops
