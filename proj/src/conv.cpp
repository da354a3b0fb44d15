#include <Eigen/Core>

#include <algorithm>
#include <cstring>

#include "swinvftr/ops.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION::ops {

using detail::make_result;

namespace {

using MatR = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

struct ConvGeometry {
  int64_t n, cin, cout, groups;
  Dims3 in, out, kernel;
  Conv3dOptions opt;

  int64_t cin_g() const { return cin / groups; }
  int64_t cout_g() const { return cout / groups; }
  int64_t in_volume() const { return in[0] * in[1] * in[2]; }
  int64_t out_volume() const { return out[0] * out[1] * out[2]; }
  int64_t kernel_volume() const { return kernel[0] * kernel[1] * kernel[2]; }
  int64_t col_rows() const { return cin_g() * kernel_volume(); }
  bool pointwise() const {
    return kernel_volume() == 1 && opt.stride == Dims3{1, 1, 1} && opt.padding == Dims3{0, 0, 0};
  }
};

// Valid output range [lo, hi) along one axis for kernel tap `k`.
inline void valid_range(int64_t out_len, int64_t in_len, int64_t stride, int64_t pad, int64_t offset,
                        int64_t& lo, int64_t& hi) {
  // input index = o * stride - pad + offset must lie in [0, in_len)
  const int64_t base = offset - pad;
  lo = base >= 0 ? 0 : (-base + stride - 1) / stride;
  const int64_t last = in_len - 1 - base;
  hi = last < 0 ? 0 : std::min(out_len, last / stride + 1);
  if (lo > hi) lo = hi;
}

// Unfolds one group of one sample into a [cin_g * kvol, out_volume] matrix.
void im2col(const ConvGeometry& g, const Scalar* in, Scalar* col) {
  const auto& [sd, sh, sw] = g.opt.stride;
  const auto& [pd, ph, pw] = g.opt.padding;
  const auto& [dd, dh, dw] = g.opt.dilation;
  const int64_t D = g.in[0], H = g.in[1], W = g.in[2];
  const int64_t Do = g.out[0], Ho = g.out[1], Wo = g.out[2];
  const int64_t P = g.out_volume();
  for (int64_t ci = 0; ci < g.cin_g(); ++ci) {
    const Scalar* src_c = in + ci * D * H * W;
    for (int64_t kz = 0; kz < g.kernel[0]; ++kz) {
      for (int64_t ky = 0; ky < g.kernel[1]; ++ky) {
        for (int64_t kx = 0; kx < g.kernel[2]; ++kx) {
          Scalar* dst = col + (((ci * g.kernel[0] + kz) * g.kernel[1] + ky) * g.kernel[2] + kx) * P;
          std::fill(dst, dst + P, 0.0f);
          int64_t z0, z1, y0, y1, x0, x1;
          valid_range(Do, D, sd, pd, kz * dd, z0, z1);
          valid_range(Ho, H, sh, ph, ky * dh, y0, y1);
          valid_range(Wo, W, sw, pw, kx * dw, x0, x1);
          for (int64_t oz = z0; oz < z1; ++oz) {
            const int64_t iz = oz * sd - pd + kz * dd;
            for (int64_t oy = y0; oy < y1; ++oy) {
              const int64_t iy = oy * sh - ph + ky * dh;
              const Scalar* row = src_c + (iz * H + iy) * W;
              Scalar* out_row = dst + (oz * Ho + oy) * Wo;
              if (sw == 1) {
                const int64_t ix0 = x0 - pw + kx * dw;
                std::memcpy(out_row + x0, row + ix0, sizeof(Scalar) * (x1 - x0));
              } else {
                for (int64_t ox = x0; ox < x1; ++ox) out_row[ox] = row[ox * sw - pw + kx * dw];
              }
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the input slab.
void col2im(const ConvGeometry& g, const Scalar* col, Scalar* in_grad) {
  const auto& [sd, sh, sw] = g.opt.stride;
  const auto& [pd, ph, pw] = g.opt.padding;
  const auto& [dd, dh, dw] = g.opt.dilation;
  const int64_t D = g.in[0], H = g.in[1], W = g.in[2];
  const int64_t Do = g.out[0], Ho = g.out[1], Wo = g.out[2];
  const int64_t P = g.out_volume();
  for (int64_t ci = 0; ci < g.cin_g(); ++ci) {
    Scalar* dst_c = in_grad + ci * D * H * W;
    for (int64_t kz = 0; kz < g.kernel[0]; ++kz) {
      for (int64_t ky = 0; ky < g.kernel[1]; ++ky) {
        for (int64_t kx = 0; kx < g.kernel[2]; ++kx) {
          const Scalar* src =
              col + (((ci * g.kernel[0] + kz) * g.kernel[1] + ky) * g.kernel[2] + kx) * P;
          int64_t z0, z1, y0, y1, x0, x1;
          valid_range(Do, D, sd, pd, kz * dd, z0, z1);
          valid_range(Ho, H, sh, ph, ky * dh, y0, y1);
          valid_range(Wo, W, sw, pw, kx * dw, x0, x1);
          for (int64_t oz = z0; oz < z1; ++oz) {
            const int64_t iz = oz * sd - pd + kz * dd;
            for (int64_t oy = y0; oy < y1; ++oy) {
              const int64_t iy = oy * sh - ph + ky * dh;
              Scalar* row = dst_c + (iz * H + iy) * W;
              const Scalar* col_row = src + (oz * Ho + oy) * Wo;
              for (int64_t ox = x0; ox < x1; ++ox) row[ox * sw - pw + kx * dw] += col_row[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const Conv3dOptions& options) {
  if (input.rank() != 5 || weight.rank() != 5) {
    throw ShapeError("conv3d: expected 5-D input and weight, got " + shape_str(input.shape()) +
                     " and " + shape_str(weight.shape()));
  }
  ConvGeometry g;
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.cout = weight.dim(0);
  g.groups = options.groups;
  g.opt = options;
  g.in = {input.dim(2), input.dim(3), input.dim(4)};
  g.kernel = {weight.dim(2), weight.dim(3), weight.dim(4)};
  if (g.groups < 1 || g.cin % g.groups != 0 || g.cout % g.groups != 0 ||
      weight.dim(1) != g.cin / g.groups) {
    throw ShapeError("conv3d: input " + shape_str(input.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()) + " for groups=" + std::to_string(g.groups));
  }
  if (bias.defined() && bias.numel() != g.cout) {
    throw ShapeError("conv3d: bias " + shape_str(bias.shape()) + " vs weight " +
                     shape_str(weight.shape()));
  }
  for (int a = 0; a < 3; ++a) {
    const int64_t span = options.dilation[a] * (g.kernel[a] - 1) + 1;
    const int64_t padded = g.in[a] + 2 * options.padding[a];
    if (options.stride[a] < 1 || options.dilation[a] < 1 || options.padding[a] < 0 || padded < span) {
      throw ShapeError("conv3d: input " + shape_str(input.shape()) + " too small for weight " +
                       shape_str(weight.shape()) + " on axis " + std::to_string(a));
    }
    g.out[a] = (padded - span) / options.stride[a] + 1;
  }

  const int64_t P = g.out_volume();
  const int64_t K = g.col_rows();
  const int64_t in_slab = g.cin_g() * g.in_volume();
  const int64_t out_slab = g.cout_g() * P;
  std::vector<Scalar> out(g.n * g.cout * P);
  std::vector<Scalar> col(g.pointwise() ? 0 : K * P);
  auto x = input.data();
  auto w = weight.data();
  for (int64_t b = 0; b < g.n; ++b) {
    for (int64_t gi = 0; gi < g.groups; ++gi) {
      const Scalar* in_ptr = x.data() + (b * g.groups + gi) * in_slab;
      const Scalar* col_ptr = in_ptr;
      if (!g.pointwise()) {
        im2col(g, in_ptr, col.data());
        col_ptr = col.data();
      }
      CMapR Wg(w.data() + gi * g.cout_g() * K, g.cout_g(), K);
      MapR Y(out.data() + (b * g.groups + gi) * out_slab, g.cout_g(), P);
      Y.noalias() = Wg * CMapR(col_ptr, K, P);
    }
    if (bias.defined()) {
      auto bv = bias.data();
      for (int64_t co = 0; co < g.cout; ++co) {
        Scalar* y = out.data() + (b * g.cout + co) * P;
        for (int64_t i = 0; i < P; ++i) y[i] += bv[co];
      }
    }
  }

  Shape out_shape{g.n, g.cout, g.out[0], g.out[1], g.out[2]};
  return make_result(std::move(out_shape), std::move(out), {input, weight, bias}, [g](TensorImpl& self) {
    TensorImpl& px = self.parent(0);
    TensorImpl& pw = self.parent(1);
    TensorImpl& pb = self.parent(2);
    const int64_t P = g.out_volume();
    const int64_t K = g.col_rows();
    const int64_t in_slab = g.cin_g() * g.in_volume();
    const int64_t out_slab = g.cout_g() * P;
    std::vector<Scalar> col(g.pointwise() ? 0 : K * P);
    for (int64_t b = 0; b < g.n; ++b) {
      for (int64_t gi = 0; gi < g.groups; ++gi) {
        CMapR dY(self.grad.data() + (b * g.groups + gi) * out_slab, g.cout_g(), P);
        const Scalar* in_ptr = px.data.data() + (b * g.groups + gi) * in_slab;
        if (pw.requires_grad) {
          const Scalar* col_ptr = in_ptr;
          if (!g.pointwise()) {
            im2col(g, in_ptr, col.data());
            col_ptr = col.data();
          }
          MapR dW(pw.ensure_grad().data() + gi * g.cout_g() * K, g.cout_g(), K);
          dW.noalias() += dY * CMapR(col_ptr, K, P).transpose();
        }
        if (px.requires_grad) {
          CMapR Wg(pw.data.data() + gi * g.cout_g() * K, g.cout_g(), K);
          Scalar* gx = px.ensure_grad().data() + (b * g.groups + gi) * in_slab;
          if (g.pointwise()) {
            MapR dX(gx, K, P);
            dX.noalias() += Wg.transpose() * dY;
          } else {
            MapR dcol(col.data(), K, P);
            dcol.noalias() = Wg.transpose() * dY;
            col2im(g, col.data(), gx);
          }
        }
      }
      if (pb.requires_grad) {
        auto& gb = pb.ensure_grad();
        for (int64_t co = 0; co < g.cout; ++co) {
          const Scalar* dy = self.grad.data() + (b * g.cout + co) * P;
          double acc = 0.0;
          for (int64_t i = 0; i < P; ++i) acc += dy[i];
          gb[co] += static_cast<Scalar>(acc);
        }
      }
    }
  });
}

Tensor conv_transpose3d(const Tensor& input, const Tensor& weight, const Tensor& bias, int64_t stride,
                        int64_t kernel) {
  if (stride != 2 || kernel != 2) {
    throw UnsupportedConfig("conv_transpose3d: only kernel=2, stride=2 is supported (got kernel=" +
                            std::to_string(kernel) + ", stride=" + std::to_string(stride) + ")");
  }
  if (input.rank() != 5 || weight.rank() != 5 || weight.dim(0) != input.dim(1) || weight.dim(2) != 2 ||
      weight.dim(3) != 2 || weight.dim(4) != 2) {
    throw ShapeError("conv_transpose3d: input " + shape_str(input.shape()) +
                     " incompatible with weight " + shape_str(weight.shape()));
  }
  const int64_t n = input.dim(0), cin = input.dim(1), cout = weight.dim(1);
  const int64_t D = input.dim(2), H = input.dim(3), W = input.dim(4);
  if (bias.defined() && bias.numel() != cout) {
    throw ShapeError("conv_transpose3d: bias " + shape_str(bias.shape()) + " vs weight " +
                     shape_str(weight.shape()));
  }
  const int64_t P = D * H * W;
  const int64_t R = cout * 8;
  // Y[(co, tap), p] = sum_ci W[ci, (co, tap)] X[ci, p], then each tap lands at its 2x2x2 offset.
  std::vector<Scalar> out(n * cout * 8 * P);
  std::vector<Scalar> y(R * P);
  auto x = input.data();
  CMapR Wm(weight.data().data(), cin, R);
  for (int64_t b = 0; b < n; ++b) {
    MapR Y(y.data(), R, P);
    Y.noalias() = Wm.transpose() * CMapR(x.data() + b * cin * P, cin, P);
    for (int64_t co = 0; co < cout; ++co) {
      Scalar* dst = out.data() + (b * cout + co) * 8 * P;
      const Scalar bv = bias.defined() ? bias.data()[co] : 0.0f;
      for (int64_t tap = 0; tap < 8; ++tap) {
        const int64_t a = tap >> 2, bb = (tap >> 1) & 1, c = tap & 1;
        const Scalar* src = y.data() + (co * 8 + tap) * P;
        for (int64_t z = 0; z < D; ++z) {
          for (int64_t yy = 0; yy < H; ++yy) {
            Scalar* row = dst + ((2 * z + a) * 2 * H + 2 * yy + bb) * 2 * W + c;
            const Scalar* s = src + (z * H + yy) * W;
            for (int64_t xx = 0; xx < W; ++xx) row[2 * xx] = s[xx] + bv;
          }
        }
      }
    }
  }
  Shape out_shape{n, cout, 2 * D, 2 * H, 2 * W};
  return make_result(std::move(out_shape), std::move(out), {input, weight, bias},
                     [n, cin, cout, D, H, W, P, R](TensorImpl& self) {
                       TensorImpl& px = self.parent(0);
                       TensorImpl& pw = self.parent(1);
                       TensorImpl& pb = self.parent(2);
                       std::vector<Scalar> dy(R * P);
                       for (int64_t b = 0; b < n; ++b) {
                         const Scalar* go = self.grad.data() + b * cout * 8 * P;
                         for (int64_t co = 0; co < cout; ++co) {
                           double bias_acc = 0.0;
                           for (int64_t tap = 0; tap < 8; ++tap) {
                             const int64_t a = tap >> 2, bb = (tap >> 1) & 1, c = tap & 1;
                             Scalar* dst = dy.data() + (co * 8 + tap) * P;
                             for (int64_t z = 0; z < D; ++z) {
                               for (int64_t yy = 0; yy < H; ++yy) {
                                 const Scalar* row =
                                     go + co * 8 * P + ((2 * z + a) * 2 * H + 2 * yy + bb) * 2 * W + c;
                                 Scalar* d = dst + (z * H + yy) * W;
                                 for (int64_t xx = 0; xx < W; ++xx) {
                                   d[xx] = row[2 * xx];
                                   bias_acc += row[2 * xx];
                                 }
                               }
                             }
                           }
                           if (pb.requires_grad) pb.ensure_grad()[co] += static_cast<Scalar>(bias_acc);
                         }
                         CMapR dY(dy.data(), R, P);
                         if (px.requires_grad) {
                           MapR dX(px.ensure_grad().data() + b * cin * P, cin, P);
                           dX.noalias() += CMapR(pw.data.data(), cin, R) * dY;
                         }
                         if (pw.requires_grad) {
                           MapR dW(pw.ensure_grad().data(), cin, R);
                           dW.noalias() += CMapR(px.data.data() + b * cin * P, cin, P) * dY.transpose();
                         }
                       }
                     });
}

}  // namespace swinvftr::ops
