#pragma once

#include "swinvftr/windowing.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

/// How the MRF convolutions see the tokens.
enum class MrfMode {
  Sequence1d,  // 1-D convolutions along the flattened token sequence
  Spatial3d,   // 3-D convolutions over the (d, h, w) token layout
};

/// Multi-receptive-field block:
///   x1 = gelu(conv1(x)); x2 = gelu(depthwise(x1)); x3 = gelu(dilated(x));
///   out = gelu(fuse(x1 + x2 + x3))
/// conv1/depthwise/fuse are k=1 (depthwise with groups=C); dilated is k=3,
/// dilation 2, same padding.
struct MrfBlock {
  int64_t channels = 0;
  MrfMode mode = MrfMode::Sequence1d;
  Conv3d conv1, depthwise, dilated, fuse;

  MrfBlock() = default;
  MrfBlock(const Scope& scope, int64_t channels, MrfMode mode);
  TokenGrid forward(const TokenGrid& x) const;
};

/// Transformer MLP (Linear -> GELU -> Linear), kept for the MRF ablation.
struct MlpBlock {
  Linear fc1, fc2;

  MlpBlock() = default;
  MlpBlock(const Scope& scope, int64_t channels, int64_t hidden);
  Tensor forward(const Tensor& tokens) const;
};

struct SwinBlockOptions {
  int64_t channels = 24;
  int64_t heads = 3;
  Dims3 window{4, 4, 4};
  bool use_mrf = true;
  MrfMode mrf_mode = MrfMode::Sequence1d;
  int64_t mlp_ratio = 4;
  bool relative_bias = true;
};

/// One pre-norm sub-block: x += attn(norm1(x)); x += mrf(norm2(x)).
struct SwinSubBlock {
  WindowSpec spec;
  bool use_mrf = true;
  LayerNorm norm1;
  WindowAttention attn;
  LayerNorm norm2;
  MrfBlock mrf;
  MlpBlock mlp;

  SwinSubBlock() = default;
  SwinSubBlock(const Scope& scope, const SwinBlockOptions& options, bool shifted);
  TokenGrid forward(const TokenGrid& x, std::vector<Scalar>* attention_probs = nullptr) const;
};

/// W-MSA sub-block followed by its SW-MSA twin.
struct SwinBlockPair {
  SwinSubBlock regular;
  SwinSubBlock shifted;

  SwinBlockPair() = default;
  SwinBlockPair(const Scope& scope, const SwinBlockOptions& options);
  TokenGrid forward(const TokenGrid& x) const;
};

}  // namespace swinvftr
