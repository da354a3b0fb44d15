#pragma once

#include "swinvftr/layers.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

/// Volumetric attention skip block. Three branches summed without gating:
///   spatial: conv1x1x1(conv3x3x3(x))
///   channel: pointwise(depthwise1x1x1(x))
///   identity: x
struct VaBlock {
  int64_t channels = 0;
  Conv3d spatial3, spatial1, depthwise, pointwise;

  VaBlock() = default;
  VaBlock(const Scope& scope, int64_t channels);

  Tensor spatial_branch(const Tensor& x) const;
  Tensor channel_branch(const Tensor& x) const;
  Tensor forward(const Tensor& x) const;
};

}  // namespace swinvftr
