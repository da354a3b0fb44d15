#include "swinvftr/swin_block.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

MrfBlock::MrfBlock(const Scope& scope, int64_t channels_, MrfMode mode_) : channels(channels_), mode(mode_) {
  conv1 = Conv3d(scope.sub("conv1"), channels, channels, {1, 1, 1});
  depthwise = Conv3d(scope.sub("depthwise"), channels, channels, {1, 1, 1}, {{1, 1, 1}, {0, 0, 0}, {1, 1, 1}, channels});
  if (mode == MrfMode::Sequence1d) {
    dilated = Conv3d(scope.sub("dilated"), channels, channels, {1, 1, 3}, {{1, 1, 1}, {0, 0, 2}, {1, 1, 2}, 1});
  } else {
    dilated = Conv3d(scope.sub("dilated"), channels, channels, {3, 3, 3}, same_padding(3, 2));
  }
  fuse = Conv3d(scope.sub("fuse"), channels, channels, {1, 1, 1});
}

TokenGrid MrfBlock::forward(const TokenGrid& x) const {
  if (x.channels() != channels) {
    throw ShapeError("MRF block: expected " + std::to_string(channels) + " channels, got " +
                     std::to_string(x.channels()));
  }
  Tensor v = x.to_volume();
  if (mode == MrfMode::Sequence1d) v = ops::reshape(v, {x.batch(), channels, 1, 1, x.count()});
  Tensor x1 = ops::gelu(conv1(v));
  Tensor x2 = ops::gelu(depthwise(x1));
  Tensor x3 = ops::gelu(dilated(v));
  Tensor out = ops::gelu(fuse(ops::add(ops::add(x1, x2), x3)));
  if (mode == MrfMode::Sequence1d) {
    out = ops::reshape(out, {x.batch(), channels, x.dims[0], x.dims[1], x.dims[2]});
  }
  return TokenGrid::from_volume(out);
}

MlpBlock::MlpBlock(const Scope& scope, int64_t channels, int64_t hidden)
    : fc1(scope.sub("fc1"), channels, hidden), fc2(scope.sub("fc2"), hidden, channels) {}

Tensor MlpBlock::forward(const Tensor& tokens) const { return fc2(ops::gelu(fc1(tokens))); }

SwinSubBlock::SwinSubBlock(const Scope& scope, const SwinBlockOptions& o, bool shifted)
    : spec(shifted ? WindowSpec::shifted(o.window) : WindowSpec::regular(o.window)), use_mrf(o.use_mrf) {
  norm1 = LayerNorm(scope.sub("norm1"), o.channels);
  attn = WindowAttention(scope.sub("attn"), o.channels, o.heads, o.window, o.relative_bias);
  norm2 = LayerNorm(scope.sub("norm2"), o.channels);
  if (use_mrf) {
    mrf = MrfBlock(scope.sub("mrf"), o.channels, o.mrf_mode);
  } else {
    mlp = MlpBlock(scope.sub("mlp"), o.channels, o.channels * o.mlp_ratio);
  }
}

TokenGrid SwinSubBlock::forward(const TokenGrid& x, std::vector<Scalar>* attention_probs) const {
  const std::optional<AttentionMask> mask = build_attention_mask(x.dims, spec);
  Tensor windows = window_partition({x.dims, norm1(x.tokens)}, spec);
  Tensor attended = attn.forward(windows, mask ? &*mask : nullptr, attention_probs);
  Tensor h = ops::add(x.tokens, window_reverse(attended, x.dims, spec).tokens);
  Tensor normed = norm2(h);
  Tensor branch = use_mrf ? mrf.forward({x.dims, normed}).tokens : mlp.forward(normed);
  return {x.dims, ops::add(h, branch)};
}

SwinBlockPair::SwinBlockPair(const Scope& scope, const SwinBlockOptions& options)
    : regular(scope.sub("block0"), options, false), shifted(scope.sub("block1"), options, true) {}

TokenGrid SwinBlockPair::forward(const TokenGrid& x) const { return shifted.forward(regular.forward(x)); }

}  // namespace swinvftr
