#pragma once

#include <optional>
#include <vector>

#include "swinvftr/layers.hpp"
#include "swinvftr/tensor.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

/// A batch of tokens laid out on a (d, h, w) grid; tokens are [N, d*h*w, C]
/// with the flattened index running z-major, x-minor.
struct TokenGrid {
  Dims3 dims{0, 0, 0};
  Tensor tokens;

  int64_t batch() const { return tokens.dim(0); }
  int64_t channels() const { return tokens.dim(2); }
  int64_t count() const { return dims[0] * dims[1] * dims[2]; }

  /// [N, C, d, h, w] -> grid. Lossless; the inverse is to_volume().
  static TokenGrid from_volume(const Tensor& volume);
  Tensor to_volume() const;
};

struct WindowSpec {
  Dims3 window{4, 4, 4};
  Dims3 shift{0, 0, 0};

  static WindowSpec regular(Dims3 window) { return {window, {0, 0, 0}}; }
  /// Half-window (floored) shift.
  static WindowSpec shifted(Dims3 window) { return {window, {window[0] / 2, window[1] / 2, window[2] / 2}}; }
  bool is_shifted() const { return shift[0] || shift[1] || shift[2]; }
  void validate() const;
};

/// Index bookkeeping for one (grid, spec) pair. The grid is padded up to a
/// multiple of the window, cyclically shifted by -shift, and cut into windows
/// ordered z-major. Slots are numbered window * T + t.
struct WindowLayout {
  Dims3 grid{0, 0, 0};
  Dims3 padded{0, 0, 0};
  WindowSpec spec;
  int64_t num_windows = 0;
  int64_t window_volume = 0;
  std::vector<int64_t> partition_index;  // slot -> source token, -1 for padding
  std::vector<int64_t> reverse_index;    // token -> slot
  std::vector<uint8_t> pad_flags;        // slot -> 1 if padding

  bool has_padding() const { return padded != grid; }
};

WindowLayout make_window_layout(Dims3 grid, const WindowSpec& spec);

/// Pads, shifts and partitions: [N, L, C] -> [N * numWindows, T, C]. Pad slots are zero.
Tensor window_partition(const TokenGrid& grid, const WindowSpec& spec);
/// Inverse of window_partition, dropping pad slots and undoing the shift.
TokenGrid window_reverse(const Tensor& windows, Dims3 grid_dims, const WindowSpec& spec);

/// Cyclic roll of the token grid: out[p] = in[(p + shift) mod dims]. `undo` rolls the other way.
TokenGrid cyclic_shift(const TokenGrid& grid, Dims3 shift, bool undo = false);

/// Additive attention mask, [numWindows, T, T] holding 0 or kMaskedScore.
struct AttentionMask {
  Tensor values;
  int64_t num_windows = 0;
  int64_t window_volume = 0;
};

inline constexpr Scalar kMaskedScore = -1e9f;

/// Region label of every slot: tokens attend each other iff labels agree.
/// Shifted windows use three segments per axis (27 regions); pad slots get
/// their own label so real tokens never attend padding.
std::vector<int32_t> slot_region_labels(const WindowLayout& layout);

/// Mask for the shifted case. Throws ConfigError when the spec has no shift.
AttentionMask build_shift_mask(Dims3 grid, const WindowSpec& spec);
/// Mask for any spec: covers shift regions and padding, nullopt when neither applies.
std::optional<AttentionMask> build_attention_mask(Dims3 grid, const WindowSpec& spec);

/// Scaled dot-product attention per window and head.
/// qkv is [B, T, 3C] with per-token layout [q | k | v]; bias is [heads, T, T]
/// or undefined; mask is [nW, T, T] or undefined and applies to window b % nW.
/// When `probs_out` is given it receives the [B, heads, T, T] attention weights.
Tensor attention_core(const Tensor& qkv, int64_t heads, const Tensor& bias, const Tensor& mask,
                      std::vector<Scalar>* probs_out = nullptr);

struct WindowAttention {
  int64_t dim = 0;
  int64_t heads = 1;
  Dims3 window{1, 1, 1};
  bool use_relative_bias = true;
  Linear qkv;
  Linear proj;
  Tensor bias_table;                // [(2wd-1)(2wh-1)(2ww-1), heads]
  std::vector<int64_t> bias_index;  // [T * T] into bias_table rows

  WindowAttention() = default;
  WindowAttention(const Scope& scope, int64_t dim, int64_t heads, Dims3 window, bool use_relative_bias);

  /// [heads, T, T] bias gathered from the table.
  Tensor relative_bias() const;
  Tensor forward(const Tensor& windows, const AttentionMask* mask, std::vector<Scalar>* probs_out = nullptr) const;
};

std::vector<int64_t> relative_position_index(Dims3 window);

/// Patch partition: [N, Cin, D, H, W] -> grid of (D/P, H/P, W/P) tokens, each the
/// P^3 * Cin patch vector (voxel order dz, dy, dx; channel fastest) projected by `proj`.
TokenGrid patch_partition(const Tensor& volume, int64_t patch, const Linear& proj);
std::vector<int64_t> patch_gather_index(Dims3 volume_dims, int64_t patch);

/// 2x2x2 neighbourhood concatenation (order dz, dy, dx) -> LayerNorm(8C) -> Linear(8C -> 2C).
struct PatchMerging {
  LayerNorm norm;
  Linear reduction;

  PatchMerging() = default;
  PatchMerging(const Scope& scope, int64_t channels);
  TokenGrid operator()(const TokenGrid& grid, bool allow_pad = false) const;
};

/// Concatenates 2x2x2 neighbourhoods without projection; odd extents need allow_pad.
TokenGrid merge_neighbourhoods(const TokenGrid& grid, bool allow_pad = false);

/// Attention score-matrix entries for one attention layer over `grid`:
/// numWindows * T^2 * heads after padding.
int64_t attention_score_entries(Dims3 grid, Dims3 window, int64_t heads);

}  // namespace swinvftr
