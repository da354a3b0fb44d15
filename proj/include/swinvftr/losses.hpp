#pragma once

#include <span>

#include "swinvftr/tensor.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

/// Soft multi-class dice loss. probs and target are [N, K, ...] with matching
/// shapes; each (n, k) slab contributes 1 - (2 sum(p y) + eps) / (sum(p) + sum(y) + eps)
/// and the result is the mean over all N * K terms, as a [1] tensor.
Tensor dice_loss(const Tensor& probs, const Tensor& target, Scalar eps = 1.0f);

/// labels holds N * spatial class ids; returns [N, K, spatial...] one-hot.
/// Throws ClassError for ids >= num_classes.
Tensor one_hot(std::span<const uint8_t> labels, int64_t num_classes, const Shape& spatial, int64_t batch = 1);

}  // namespace swinvftr
