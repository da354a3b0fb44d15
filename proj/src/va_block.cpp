#include "swinvftr/va_block.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

VaBlock::VaBlock(const Scope& scope, int64_t channels_) : channels(channels_) {
  spatial3 = Conv3d(scope.sub("spatial3"), channels, channels, {3, 3, 3}, same_padding(3));
  spatial1 = Conv3d(scope.sub("spatial1"), channels, channels, {1, 1, 1});
  depthwise = Conv3d(scope.sub("depthwise"), channels, channels, {1, 1, 1}, {{1, 1, 1}, {0, 0, 0}, {1, 1, 1}, channels});
  pointwise = Conv3d(scope.sub("pointwise"), channels, channels, {1, 1, 1});
}

Tensor VaBlock::spatial_branch(const Tensor& x) const { return spatial1(spatial3(x)); }

Tensor VaBlock::channel_branch(const Tensor& x) const { return pointwise(depthwise(x)); }

Tensor VaBlock::forward(const Tensor& x) const {
  if (x.rank() != 5 || x.dim(1) != channels) {
    throw ShapeError("VA block: expected [N," + std::to_string(channels) + ",D,H,W], got " +
                     shape_str(x.shape()));
  }
  return ops::add(ops::add(spatial_branch(x), channel_branch(x)), x);
}

}  // namespace swinvftr
