#pragma once

#include <memory>
#include <string>
#include <vector>

#include "swinvftr/config.hpp"
#include "swinvftr/swin_block.hpp"
#include "swinvftr/va_block.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

struct ModelConfig {
  int64_t in_channels = 1;
  int64_t num_classes = 4;
  int64_t embed_dim = 24;
  int64_t patch_size = 2;
  /// Patch-merging steps after the patch partition; total downsampling is
  /// patch_size * 2^stages.
  int64_t stages = 3;
  /// Swin sub-blocks per stage (W-MSA / SW-MSA alternating); must be even.
  int64_t depth = 2;
  /// Heads per stage, bottleneck last; stages + 1 entries.
  std::vector<int64_t> heads{3, 6, 12, 24};
  Dims3 window{4, 4, 4};
  bool use_va = true;
  bool use_mrf = true;
  bool full_resolution = true;
  bool relative_bias = true;
  MrfMode mrf_mode = MrfMode::Sequence1d;
  int64_t mlp_ratio = 4;
  uint64_t seed = 0;

  void validate() const;
  int64_t downsampling() const;
  /// Every key; `seed` included only when requested.
  KeyValues to_key_values(bool include_seed = true) const;
  /// Applies recognized keys from `kv`, consuming them; others are left in place.
  static ModelConfig from_key_values(KeyValues& kv);
  /// Equal on everything that affects parameter shapes and the forward pass.
  bool compatible_with(const ModelConfig& other) const;

  /// Spec desk-scale default.
  static ModelConfig desk();
  /// Tiny configuration for finite-difference checks.
  static ModelConfig micro();
};

/// Encoder outputs as [N, C, D, H, W] volumes. Skips and bottleneck are
/// LayerNorm-ed over channels without affine parameters.
struct FeaturePyramid {
  Tensor raw;                  // residual features of the input at /1 (full_resolution only)
  std::vector<Tensor> skips;   // /2 -> C, /4 -> 2C, ... one per stage
  Tensor bottleneck;           // /2^(stages+1) -> 2^stages C
};

/// conv3 -> IN -> GELU -> conv3 -> IN, plus (conv1 -> IN) projection when channels
/// change, summed and passed through GELU.
struct ResidualConvBlock {
  Conv3d conv_a, conv_b, projection;
  InstanceNorm norm_a, norm_b, norm_proj;
  bool has_projection = false;

  ResidualConvBlock() = default;
  ResidualConvBlock(const Scope& scope, int64_t cin, int64_t cout);
  Tensor forward(const Tensor& x) const;
};

/// Skip connection body: VA block, or a residual conv block in the no-VA ablation.
struct SkipBlock {
  bool use_va = true;
  VaBlock va;
  ResidualConvBlock residual;

  SkipBlock() = default;
  SkipBlock(const Scope& scope, int64_t channels, bool use_va);
  Tensor forward(const Tensor& x) const { return use_va ? va.forward(x) : residual.forward(x); }
};

class SwinVftr {
 public:
  explicit SwinVftr(ModelConfig config);

  SwinVftr(const SwinVftr&) = delete;
  SwinVftr& operator=(const SwinVftr&) = delete;
  SwinVftr(SwinVftr&&) = default;
  SwinVftr& operator=(SwinVftr&&) = default;

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return *store_; }
  const ParameterStore& parameters() const { return *store_; }

  FeaturePyramid encode(const Tensor& volume) const;
  /// Per-voxel class logits at input resolution. `stage_shapes`, when given,
  /// receives the output shape of every decoder block, coarsest first.
  Tensor decode_logits(const FeaturePyramid& pyramid, std::vector<Shape>* stage_shapes = nullptr) const;
  /// Softmax class probabilities [N, num_classes, D, H, W].
  Tensor decode(const FeaturePyramid& pyramid) const;
  Tensor forward(const Tensor& volume) const { return decode(encode(volume)); }

  /// Token-grid dims after the patch partition and after each merge.
  std::vector<Dims3> stage_dims(Dims3 input) const;

 private:
  ModelConfig config_;
  std::unique_ptr<ParameterStore> store_;
  Linear patch_embed_;
  std::vector<SwinBlockPair> stage_blocks_;  // stages + 1 groups of depth/2 pairs, flattened
  std::vector<PatchMerging> merges_;
  ResidualConvBlock raw_block_;
  ResidualConvBlock bottleneck_block_;
  std::vector<ConvTranspose3d> upsamples_;
  std::vector<SkipBlock> skip_blocks_;
  std::vector<ResidualConvBlock> decoder_blocks_;
  ConvTranspose3d final_upsample_;
  SkipBlock raw_skip_;
  ResidualConvBlock final_block_;
  Conv3d head_;
};

}  // namespace swinvftr
