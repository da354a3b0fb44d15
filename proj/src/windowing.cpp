#include "swinvftr/windowing.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace swinvftr::inline SWINVFTR_PRECISION {

using detail::make_result;

namespace {

using MatR = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using StridedR = Eigen::Map<MatR, 0, Eigen::OuterStride<>>;
using CStridedR = Eigen::Map<const MatR, 0, Eigen::OuterStride<>>;

int64_t round_up(int64_t v, int64_t m) { return (v + m - 1) / m * m; }

int region_along(int64_t pos, int64_t padded, int64_t window, int64_t shift) {
  if (shift == 0) return 0;
  if (pos < padded - window) return 0;
  if (pos < padded - shift) return 1;
  return 2;
}

}  // namespace

TokenGrid TokenGrid::from_volume(const Tensor& volume) {
  if (volume.rank() != 5) throw ShapeError("TokenGrid: expected [N,C,d,h,w], got " + shape_str(volume.shape()));
  const int64_t n = volume.dim(0), c = volume.dim(1);
  Dims3 dims{volume.dim(2), volume.dim(3), volume.dim(4)};
  Tensor flat = ops::reshape(volume, {n, c, dims[0] * dims[1] * dims[2]});
  return {dims, ops::permute(flat, {0, 2, 1})};
}

Tensor TokenGrid::to_volume() const {
  const int64_t n = batch(), c = channels();
  return ops::reshape(ops::permute(tokens, {0, 2, 1}), {n, c, dims[0], dims[1], dims[2]});
}

void WindowSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (window[a] < 1) throw ConfigError("window extent must be >= 1, got " + dims_str(window));
    if (shift[a] < 0 || shift[a] >= window[a]) {
      throw ConfigError("shift " + dims_str(shift) + " must satisfy 0 <= shift < window " + dims_str(window));
    }
  }
}

WindowLayout make_window_layout(Dims3 grid, const WindowSpec& spec) {
  spec.validate();
  WindowLayout layout;
  layout.grid = grid;
  layout.spec = spec;
  const Dims3& w = spec.window;
  for (int a = 0; a < 3; ++a) layout.padded[a] = round_up(grid[a], w[a]);
  const Dims3 counts{layout.padded[0] / w[0], layout.padded[1] / w[1], layout.padded[2] / w[2]};
  layout.num_windows = counts[0] * counts[1] * counts[2];
  layout.window_volume = w[0] * w[1] * w[2];
  const int64_t slots = layout.num_windows * layout.window_volume;
  layout.partition_index.assign(slots, -1);
  layout.pad_flags.assign(slots, 0);
  layout.reverse_index.assign(grid[0] * grid[1] * grid[2], -1);

  int64_t slot = 0;
  for (int64_t wz = 0; wz < counts[0]; ++wz) {
    for (int64_t wy = 0; wy < counts[1]; ++wy) {
      for (int64_t wx = 0; wx < counts[2]; ++wx) {
        for (int64_t tz = 0; tz < w[0]; ++tz) {
          for (int64_t ty = 0; ty < w[1]; ++ty) {
            for (int64_t tx = 0; tx < w[2]; ++tx, ++slot) {
              const int64_t qz = (wz * w[0] + tz + spec.shift[0]) % layout.padded[0];
              const int64_t qy = (wy * w[1] + ty + spec.shift[1]) % layout.padded[1];
              const int64_t qx = (wx * w[2] + tx + spec.shift[2]) % layout.padded[2];
              if (qz >= grid[0] || qy >= grid[1] || qx >= grid[2]) {
                layout.pad_flags[slot] = 1;
                continue;
              }
              const int64_t token = (qz * grid[1] + qy) * grid[2] + qx;
              layout.partition_index[slot] = token;
              layout.reverse_index[token] = slot;
            }
          }
        }
      }
    }
  }
  return layout;
}

Tensor window_partition(const TokenGrid& grid, const WindowSpec& spec) {
  const WindowLayout layout = make_window_layout(grid.dims, spec);
  if (grid.tokens.dim(1) != grid.count()) {
    throw ShapeError("window_partition: token count " + std::to_string(grid.tokens.dim(1)) +
                     " does not match grid " + dims_str(grid.dims));
  }
  Tensor rows = ops::gather_rows(grid.tokens, layout.partition_index, 1);
  return ops::reshape(rows, {grid.batch() * layout.num_windows, layout.window_volume, grid.channels()});
}

TokenGrid window_reverse(const Tensor& windows, Dims3 grid_dims, const WindowSpec& spec) {
  const WindowLayout layout = make_window_layout(grid_dims, spec);
  if (windows.rank() != 3 || windows.dim(1) != layout.window_volume ||
      windows.dim(0) % layout.num_windows != 0) {
    throw ShapeError("window_reverse: windows " + shape_str(windows.shape()) + " do not fit grid " +
                     dims_str(grid_dims) + " with window " + dims_str(spec.window));
  }
  const int64_t n = windows.dim(0) / layout.num_windows, c = windows.dim(2);
  Tensor rows = ops::reshape(windows, {n, layout.num_windows * layout.window_volume, c});
  return {grid_dims, ops::gather_rows(rows, layout.reverse_index, 1)};
}

TokenGrid cyclic_shift(const TokenGrid& grid, Dims3 shift, bool undo) {
  const Dims3& d = grid.dims;
  std::vector<int64_t> index(grid.count());
  for (int64_t z = 0; z < d[0]; ++z) {
    for (int64_t y = 0; y < d[1]; ++y) {
      for (int64_t x = 0; x < d[2]; ++x) {
        const int64_t sign = undo ? -1 : 1;
        const int64_t sz = ((z + sign * shift[0]) % d[0] + d[0]) % d[0];
        const int64_t sy = ((y + sign * shift[1]) % d[1] + d[1]) % d[1];
        const int64_t sx = ((x + sign * shift[2]) % d[2] + d[2]) % d[2];
        index[(z * d[1] + y) * d[2] + x] = (sz * d[1] + sy) * d[2] + sx;
      }
    }
  }
  return {d, ops::gather_rows(grid.tokens, index, 1)};
}

std::vector<int32_t> slot_region_labels(const WindowLayout& layout) {
  const Dims3& w = layout.spec.window;
  const Dims3& s = layout.spec.shift;
  const Dims3 counts{layout.padded[0] / w[0], layout.padded[1] / w[1], layout.padded[2] / w[2]};
  std::vector<int32_t> labels(layout.num_windows * layout.window_volume);
  int64_t slot = 0;
  for (int64_t wz = 0; wz < counts[0]; ++wz) {
    for (int64_t wy = 0; wy < counts[1]; ++wy) {
      for (int64_t wx = 0; wx < counts[2]; ++wx) {
        for (int64_t tz = 0; tz < w[0]; ++tz) {
          for (int64_t ty = 0; ty < w[1]; ++ty) {
            for (int64_t tx = 0; tx < w[2]; ++tx, ++slot) {
              if (layout.pad_flags[slot]) {
                labels[slot] = 27;
                continue;
              }
              const int rz = region_along(wz * w[0] + tz, layout.padded[0], w[0], s[0]);
              const int ry = region_along(wy * w[1] + ty, layout.padded[1], w[1], s[1]);
              const int rx = region_along(wx * w[2] + tx, layout.padded[2], w[2], s[2]);
              labels[slot] = (rz * 3 + ry) * 3 + rx;
            }
          }
        }
      }
    }
  }
  return labels;
}

namespace {

AttentionMask mask_from_layout(const WindowLayout& layout) {
  const std::vector<int32_t> labels = slot_region_labels(layout);
  const int64_t nw = layout.num_windows, t = layout.window_volume;
  std::vector<Scalar> values(nw * t * t, 0.0f);
  for (int64_t w = 0; w < nw; ++w) {
    const int32_t* lab = labels.data() + w * t;
    Scalar* m = values.data() + w * t * t;
    for (int64_t a = 0; a < t; ++a) {
      for (int64_t b = 0; b < t; ++b) m[a * t + b] = lab[a] == lab[b] ? 0.0f : kMaskedScore;
    }
  }
  return {Tensor::from_data({nw, t, t}, std::move(values)), nw, t};
}

}  // namespace

AttentionMask build_shift_mask(Dims3 grid, const WindowSpec& spec) {
  if (!spec.is_shifted()) throw ConfigError("build_shift_mask: shift is zero; no mask is defined");
  return mask_from_layout(make_window_layout(grid, spec));
}

std::optional<AttentionMask> build_attention_mask(Dims3 grid, const WindowSpec& spec) {
  const WindowLayout layout = make_window_layout(grid, spec);
  if (!spec.is_shifted() && !layout.has_padding()) return std::nullopt;
  return mask_from_layout(layout);
}

Tensor attention_core(const Tensor& qkv, int64_t heads, const Tensor& bias, const Tensor& mask,
                      std::vector<Scalar>* probs_out) {
  if (qkv.rank() != 3 || qkv.dim(2) % 3 != 0) {
    throw ShapeError("attention_core: expected [B,T,3C], got " + shape_str(qkv.shape()));
  }
  const int64_t B = qkv.dim(0), T = qkv.dim(1), C = qkv.dim(2) / 3;
  if (heads < 1 || C % heads != 0) {
    throw ConfigError("attention_core: channels " + std::to_string(C) + " not divisible by heads " +
                      std::to_string(heads));
  }
  const int64_t hd = C / heads;
  if (bias.defined() && bias.shape() != Shape{heads, T, T}) {
    throw ShapeError("attention_core: bias " + shape_str(bias.shape()) + " expected [" +
                     std::to_string(heads) + "," + std::to_string(T) + "," + std::to_string(T) + "]");
  }
  int64_t nw = 1;
  if (mask.defined()) {
    if (mask.rank() != 3 || mask.dim(1) != T || mask.dim(2) != T || B % mask.dim(0) != 0) {
      throw ShapeError("attention_core: mask " + shape_str(mask.shape()) + " incompatible with " +
                       shape_str(qkv.shape()));
    }
    nw = mask.dim(0);
  }
  const Scalar scale = 1.0f / std::sqrt(static_cast<Scalar>(hd));
  auto probs = std::make_shared<std::vector<Scalar>>(B * heads * T * T);
  std::vector<Scalar> out(B * T * C);
  const Scalar* src = qkv.data().data();
  for (int64_t b = 0; b < B; ++b) {
    const Scalar* base = src + b * T * 3 * C;
    for (int64_t h = 0; h < heads; ++h) {
      CStridedR Q(base + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
      CStridedR K(base + C + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
      CStridedR V(base + 2 * C + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
      MapR S(probs->data() + (b * heads + h) * T * T, T, T);
      S.noalias() = scale * (Q * K.transpose());
      if (bias.defined()) S += CMapR(bias.data().data() + h * T * T, T, T);
      if (mask.defined()) S += CMapR(mask.data().data() + (b % nw) * T * T, T, T);
      for (int64_t r = 0; r < T; ++r) {
        Scalar* row = S.data() + r * T;
        const Scalar mx = *std::max_element(row, row + T);
        double total = 0.0;
        for (int64_t k = 0; k < T; ++k) {
          row[k] = std::exp(row[k] - mx);
          total += row[k];
        }
        const Scalar inv = static_cast<Scalar>(1.0 / total);
        for (int64_t k = 0; k < T; ++k) row[k] *= inv;
      }
      StridedR O(out.data() + b * T * C + h * hd, T, hd, Eigen::OuterStride<>(C));
      O.noalias() = S * V;
    }
  }
  if (probs_out) *probs_out = *probs;

  return make_result({B, T, C}, std::move(out), {qkv, bias, mask},
                     [probs, B, T, C, heads, hd, scale](TensorImpl& self) {
                       TensorImpl& pq = self.parent(0);
                       TensorImpl& pb = self.parent(1);
                       const Scalar* src = pq.data.data();
                       Scalar* gq = pq.requires_grad ? pq.ensure_grad().data() : nullptr;
                       Scalar* gb = pb.requires_grad ? pb.ensure_grad().data() : nullptr;
                       MatR dP(T, T), dS(T, T);
                       for (int64_t b = 0; b < B; ++b) {
                         const Scalar* base = src + b * T * 3 * C;
                         for (int64_t h = 0; h < heads; ++h) {
                           CStridedR Q(base + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
                           CStridedR K(base + C + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
                           CStridedR V(base + 2 * C + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
                           CMapR P(probs->data() + (b * heads + h) * T * T, T, T);
                           CStridedR dO(self.grad.data() + b * T * C + h * hd, T, hd, Eigen::OuterStride<>(C));
                           dP.noalias() = dO * V.transpose();
                           for (int64_t r = 0; r < T; ++r) {
                             double dot = 0.0;
                             for (int64_t k = 0; k < T; ++k) dot += static_cast<double>(dP(r, k)) * P(r, k);
                             for (int64_t k = 0; k < T; ++k) {
                               dS(r, k) = P(r, k) * (dP(r, k) - static_cast<Scalar>(dot));
                             }
                           }
                           if (gb) MapR(gb + h * T * T, T, T) += dS;
                           if (gq) {
                             Scalar* gbase = gq + b * T * 3 * C;
                             StridedR dQ(gbase + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
                             StridedR dK(gbase + C + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
                             StridedR dV(gbase + 2 * C + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
                             dQ.noalias() += scale * (dS * K);
                             dK.noalias() += scale * (dS.transpose() * Q);
                             dV.noalias() += P.transpose() * dO;
                           }
                         }
                       }
                     });
}

std::vector<int64_t> relative_position_index(Dims3 window) {
  const int64_t t = window[0] * window[1] * window[2];
  std::vector<int64_t> index(t * t);
  const int64_t sy = 2 * window[1] - 1, sx = 2 * window[2] - 1;
  for (int64_t a = 0; a < t; ++a) {
    const int64_t az = a / (window[1] * window[2]), ay = (a / window[2]) % window[1], ax = a % window[2];
    for (int64_t b = 0; b < t; ++b) {
      const int64_t bz = b / (window[1] * window[2]), by = (b / window[2]) % window[1], bx = b % window[2];
      const int64_t dz = az - bz + window[0] - 1;
      const int64_t dy = ay - by + window[1] - 1;
      const int64_t dx = ax - bx + window[2] - 1;
      index[a * t + b] = (dz * sy + dy) * sx + dx;
    }
  }
  return index;
}

WindowAttention::WindowAttention(const Scope& scope, int64_t dim_, int64_t heads_, Dims3 window_,
                                 bool use_relative_bias_)
    : dim(dim_), heads(heads_), window(window_), use_relative_bias(use_relative_bias_) {
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError("WindowAttention: channels " + std::to_string(dim) + " not divisible by heads " +
                      std::to_string(heads));
  }
  qkv = Linear(scope.sub("qkv"), dim, 3 * dim);
  proj = Linear(scope.sub("proj"), dim, dim);
  if (use_relative_bias) {
    const int64_t entries = (2 * window[0] - 1) * (2 * window[1] - 1) * (2 * window[2] - 1);
    bias_table = scope.add("relative_position_bias_table", {entries, heads},
                           InitSpec::trunc_normal(kWeightInitStd));
    bias_index = relative_position_index(window);
  }
}

Tensor WindowAttention::relative_bias() const {
  const int64_t t = window[0] * window[1] * window[2];
  Tensor rows = ops::reshape(bias_table, {1, bias_table.dim(0), heads});
  Tensor gathered = ops::gather_rows(rows, bias_index, 1);  // [1, T*T, heads]
  return ops::reshape(ops::permute(gathered, {0, 2, 1}), {heads, t, t});
}

Tensor WindowAttention::forward(const Tensor& windows, const AttentionMask* mask,
                                std::vector<Scalar>* probs_out) const {
  if (windows.rank() != 3 || windows.dim(2) != dim) {
    throw ShapeError("WindowAttention: expected [B,T," + std::to_string(dim) + "], got " +
                     shape_str(windows.shape()));
  }
  Tensor bias = use_relative_bias ? relative_bias() : Tensor{};
  Tensor mask_values = mask ? mask->values : Tensor{};
  Tensor attended = attention_core(qkv(windows), heads, bias, mask_values, probs_out);
  return proj(attended);
}

std::vector<int64_t> patch_gather_index(Dims3 volume_dims, int64_t patch) {
  const Dims3 g{volume_dims[0] / patch, volume_dims[1] / patch, volume_dims[2] / patch};
  std::vector<int64_t> index;
  index.reserve(volume_dims[0] * volume_dims[1] * volume_dims[2]);
  for (int64_t z = 0; z < g[0]; ++z) {
    for (int64_t y = 0; y < g[1]; ++y) {
      for (int64_t x = 0; x < g[2]; ++x) {
        for (int64_t dz = 0; dz < patch; ++dz) {
          for (int64_t dy = 0; dy < patch; ++dy) {
            for (int64_t dx = 0; dx < patch; ++dx) {
              const int64_t vz = z * patch + dz, vy = y * patch + dy, vx = x * patch + dx;
              index.push_back((vz * volume_dims[1] + vy) * volume_dims[2] + vx);
            }
          }
        }
      }
    }
  }
  return index;
}

TokenGrid patch_partition(const Tensor& volume, int64_t patch, const Linear& proj) {
  if (volume.rank() != 5) {
    throw ShapeError("patch_partition: expected [N,C,D,H,W], got " + shape_str(volume.shape()));
  }
  const Dims3 vd{volume.dim(2), volume.dim(3), volume.dim(4)};
  for (int a = 0; a < 3; ++a) {
    if (vd[a] % patch != 0) {
      throw ShapeError("patch_partition: volume " + shape_str(volume.shape()) +
                       " not divisible by patch size " + std::to_string(patch));
    }
  }
  const int64_t n = volume.dim(0), c = volume.dim(1);
  const int64_t voxels = vd[0] * vd[1] * vd[2];
  Tensor rows = c == 1 ? ops::reshape(volume, {n, voxels, 1})
                       : ops::permute(ops::reshape(volume, {n, c, voxels}), {0, 2, 1});
  const int64_t group = patch * patch * patch;
  Tensor patches = ops::gather_rows(rows, patch_gather_index(vd, patch), group);
  return {{vd[0] / patch, vd[1] / patch, vd[2] / patch}, proj(patches)};
}

TokenGrid merge_neighbourhoods(const TokenGrid& grid, bool allow_pad) {
  const Dims3& d = grid.dims;
  if (!allow_pad && (d[0] % 2 || d[1] % 2 || d[2] % 2)) {
    throw ShapeError("patch_merging: grid " + dims_str(d) + " has odd extent and padding is disabled");
  }
  const Dims3 out{(d[0] + 1) / 2, (d[1] + 1) / 2, (d[2] + 1) / 2};
  std::vector<int64_t> index;
  index.reserve(out[0] * out[1] * out[2] * 8);
  for (int64_t z = 0; z < out[0]; ++z) {
    for (int64_t y = 0; y < out[1]; ++y) {
      for (int64_t x = 0; x < out[2]; ++x) {
        for (int64_t dz = 0; dz < 2; ++dz) {
          for (int64_t dy = 0; dy < 2; ++dy) {
            for (int64_t dx = 0; dx < 2; ++dx) {
              const int64_t sz = 2 * z + dz, sy = 2 * y + dy, sx = 2 * x + dx;
              const bool inside = sz < d[0] && sy < d[1] && sx < d[2];
              index.push_back(inside ? (sz * d[1] + sy) * d[2] + sx : -1);
            }
          }
        }
      }
    }
  }
  return {out, ops::gather_rows(grid.tokens, index, 8)};
}

PatchMerging::PatchMerging(const Scope& scope, int64_t channels)
    : norm(scope.sub("norm"), 8 * channels), reduction(scope.sub("reduction"), 8 * channels, 2 * channels, false) {}

TokenGrid PatchMerging::operator()(const TokenGrid& grid, bool allow_pad) const {
  TokenGrid merged = merge_neighbourhoods(grid, allow_pad);
  return {merged.dims, reduction(norm(merged.tokens))};
}

int64_t attention_score_entries(Dims3 grid, Dims3 window, int64_t heads) {
  const WindowLayout layout = make_window_layout(grid, WindowSpec::regular(window));
  return layout.num_windows * layout.window_volume * layout.window_volume * heads;
}

}  // namespace swinvftr
