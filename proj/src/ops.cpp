#include "swinvftr/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace swinvftr::inline SWINVFTR_PRECISION::ops {

using detail::make_result;

namespace {

using MatR = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

int normalize_axis(int axis, int64_t rank, const Shape& shape) {
  const int a = axis < 0 ? axis + static_cast<int>(rank) : axis;
  if (a < 0 || a >= rank) {
    throw AxisError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  }
  return a;
}

void accumulate(TensorImpl& parent, const std::vector<Scalar>& g) {
  if (!parent.requires_grad) return;
  auto& pg = parent.ensure_grad();
  for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<Scalar> out(a.numel());
  auto x = a.data(), y = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](TensorImpl& self) {
    accumulate(self.parent(0), self.grad);
    accumulate(self.parent(1), self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<Scalar> out(a.numel());
  auto x = a.data(), y = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](TensorImpl& self) {
    accumulate(self.parent(0), self.grad);
    if (self.parent(1).requires_grad) {
      auto& g = self.parent(1).ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<Scalar> out(a.numel());
  auto x = a.data(), y = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](TensorImpl& self) {
    TensorImpl& pa = self.parent(0);
    TensorImpl& pb = self.parent(1);
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

Tensor scale(const Tensor& a, Scalar factor) {
  std::vector<Scalar> out(a.data().begin(), a.data().end());
  for (Scalar& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](TensorImpl& self) {
    TensorImpl& p = self.parent(0);
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (Scalar v : a.data()) acc += v;
  return make_result({1}, {static_cast<Scalar>(acc)}, {a}, [](TensorImpl& self) {
    TensorImpl& p = self.parent(0);
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (Scalar& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double acc = 0.0;
  for (Scalar v : a.data()) acc += v;
  return make_result({1}, {static_cast<Scalar>(acc / n)}, {a}, [n](TensorImpl& self) {
    TensorImpl& p = self.parent(0);
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    const Scalar d = static_cast<Scalar>(self.grad[0] / n);
    for (Scalar& v : g) v += d;
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<Scalar> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {a},
                     [](TensorImpl& self) { accumulate(self.parent(0), self.grad); });
}

namespace {

// Maps every output linear index to its source linear index for a permutation.
std::vector<int64_t> permutation_sources(const Shape& in_shape, const std::vector<int>& order) {
  const size_t rank = in_shape.size();
  std::vector<int64_t> in_strides(rank, 1);
  for (size_t i = rank - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
  Shape out_shape(rank);
  std::vector<int64_t> strides(rank);
  for (size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[order[i]];
    strides[i] = in_strides[order[i]];
  }
  const int64_t total = numel(in_shape);
  std::vector<int64_t> src(total);
  std::vector<int64_t> counter(rank, 0);
  int64_t offset = 0;
  for (int64_t i = 0; i < total; ++i) {
    src[i] = offset;
    for (size_t ax = rank; ax-- > 0;) {
      if (++counter[ax] < out_shape[ax]) {
        offset += strides[ax];
        break;
      }
      offset -= strides[ax] * (out_shape[ax] - 1);
      counter[ax] = 0;
    }
  }
  return src;
}

}  // namespace

Tensor permute(const Tensor& a, const std::vector<int>& order) {
  const int64_t rank = a.rank();
  if (static_cast<int64_t>(order.size()) != rank) {
    throw AxisError("permute: order has " + std::to_string(order.size()) + " axes for shape " +
                    shape_str(a.shape()));
  }
  std::vector<bool> seen(rank, false);
  for (int ax : order) {
    if (ax < 0 || ax >= rank || seen[ax]) throw AxisError("permute: invalid axis order");
    seen[ax] = true;
  }
  Shape out_shape(rank);
  for (int64_t i = 0; i < rank; ++i) out_shape[i] = a.shape()[order[i]];
  auto src = std::make_shared<std::vector<int64_t>>(permutation_sources(a.shape(), order));
  std::vector<Scalar> out(a.numel());
  auto x = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[(*src)[i]];
  return make_result(std::move(out_shape), std::move(out), {a}, [src](TensorImpl& self) {
    TensorImpl& p = self.parent(0);
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) g[(*src)[i]] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  const int ax = normalize_axis(axis, static_cast<int64_t>(first.size()), first);
  Shape out_shape = first;
  out_shape[ax] = 0;
  for (const Tensor& t : parts) {
    Shape s = t.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
    for (size_t i = 0; i < s.size(); ++i) {
      if (static_cast<int>(i) != ax && s[i] != first[i]) {
        throw ShapeError("concat: shape mismatch " + shape_str(first) + " vs " + shape_str(s));
      }
    }
    out_shape[ax] += s[ax];
  }
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= first[i];
  for (size_t i = ax + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<int64_t> blocks;
  for (const Tensor& t : parts) blocks.push_back(t.shape()[ax] * inner);
  const int64_t out_block = out_shape[ax] * inner;

  std::vector<Scalar> out(numel(out_shape));
  int64_t col = 0;
  for (size_t k = 0; k < parts.size(); ++k) {
    auto x = parts[k].data();
    for (int64_t o = 0; o < outer; ++o) {
      std::copy_n(x.begin() + o * blocks[k], blocks[k], out.begin() + o * out_block + col);
    }
    col += blocks[k];
  }
  return make_result(std::move(out_shape), std::move(out), parts,
                     [blocks, outer, out_block](TensorImpl& self) {
                       int64_t col = 0;
                       for (size_t k = 0; k < blocks.size(); ++k) {
                         TensorImpl& p = self.parent(k);
                         if (p.requires_grad) {
                           auto& g = p.ensure_grad();
                           for (int64_t o = 0; o < outer; ++o) {
                             const Scalar* src = self.grad.data() + o * out_block + col;
                             Scalar* dst = g.data() + o * blocks[k];
                             for (int64_t i = 0; i < blocks[k]; ++i) dst[i] += src[i];
                           }
                         }
                         col += blocks[k];
                       }
                     });
}

Tensor gather_rows(const Tensor& x, std::span<const int64_t> index, int64_t group) {
  if (x.rank() != 3) throw ShapeError("gather_rows: expected [N,R,C], got " + shape_str(x.shape()));
  if (group < 1 || index.size() % group != 0) {
    throw ShapeError("gather_rows: index length " + std::to_string(index.size()) +
                     " not a multiple of group " + std::to_string(group));
  }
  const int64_t n = x.dim(0), rows = x.dim(1), c = x.dim(2);
  const int64_t m = static_cast<int64_t>(index.size()) / group;
  for (int64_t idx : index) {
    if (idx >= rows) throw ShapeError("gather_rows: row index out of range");
  }
  auto idx = std::make_shared<std::vector<int64_t>>(index.begin(), index.end());
  std::vector<Scalar> out(n * m * group * c, 0.0f);
  auto src = x.data();
  for (int64_t b = 0; b < n; ++b) {
    const Scalar* in = src.data() + b * rows * c;
    Scalar* dst = out.data() + b * m * group * c;
    for (size_t j = 0; j < idx->size(); ++j) {
      const int64_t r = (*idx)[j];
      if (r >= 0) std::copy_n(in + r * c, c, dst + j * c);
    }
  }
  return make_result({n, m, group * c}, std::move(out), {x}, [idx, n, rows, c](TensorImpl& self) {
    TensorImpl& p = self.parent(0);
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    const int64_t per_batch = static_cast<int64_t>(idx->size()) * c;
    for (int64_t b = 0; b < n; ++b) {
      Scalar* dst = g.data() + b * rows * c;
      const Scalar* go = self.grad.data() + b * per_batch;
      for (size_t j = 0; j < idx->size(); ++j) {
        const int64_t r = (*idx)[j];
        if (r < 0) continue;
        for (int64_t k = 0; k < c; ++k) dst[r * c + k] += go[j * c + k];
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2) throw ShapeError("linear: weight must be 2-D, got " + shape_str(weight.shape()));
  const int64_t in = weight.dim(1), out_features = weight.dim(0);
  if (x.dim(-1) != in) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_features)) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  }
  const int64_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_features;
  std::vector<Scalar> out(rows * out_features);
  {
    CMapR X(x.data().data(), rows, in);
    CMapR W(weight.data().data(), out_features, in);
    MapR Y(out.data(), rows, out_features);
    Y.noalias() = X * W.transpose();
    if (bias.defined()) {
      Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> b(bias.data().data(), out_features);
      Y.rowwise() += b;
    }
  }
  return make_result(std::move(out_shape), std::move(out), {x, weight, bias},
                     [rows, in, out_features](TensorImpl& self) {
                       CMapR dY(self.grad.data(), rows, out_features);
                       TensorImpl& px = self.parent(0);
                       TensorImpl& pw = self.parent(1);
                       TensorImpl& pb = self.parent(2);
                       if (px.requires_grad) {
                         MapR dX(px.ensure_grad().data(), rows, in);
                         dX.noalias() += dY * CMapR(pw.data.data(), out_features, in);
                       }
                       if (pw.requires_grad) {
                         MapR dW(pw.ensure_grad().data(), out_features, in);
                         dW.noalias() += dY.transpose() * CMapR(px.data.data(), rows, in);
                       }
                       if (pb.requires_grad) {
                         Scalar* db = pb.ensure_grad().data();
                         const Scalar* g = self.grad.data();
                         for (int64_t r = 0; r < rows; ++r)
                           for (int64_t o = 0; o < out_features; ++o) db[o] += g[r * out_features + o];
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps) {
  const int64_t c = x.dim(-1);
  if (c == 0) throw ShapeError("layer_norm: zero-length channel axis");
  if (gamma.numel() != c || beta.numel() != c) {
    throw ShapeError("layer_norm: input " + shape_str(x.shape()) + " vs gamma " +
                     shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()));
  }
  const int64_t rows = x.numel() / c;
  auto xhat = std::make_shared<std::vector<Scalar>>(x.numel());
  auto rstd = std::make_shared<std::vector<Scalar>>(rows);
  std::vector<Scalar> out(x.numel());
  auto in = x.data();
  auto g = gamma.data(), b = beta.data();
  for (int64_t r = 0; r < rows; ++r) {
    const Scalar* row = in.data() + r * c;
    double m = 0.0;
    for (int64_t k = 0; k < c; ++k) m += row[k];
    m /= static_cast<double>(c);
    double var = 0.0;
    for (int64_t k = 0; k < c; ++k) var += (row[k] - m) * (row[k] - m);
    var /= static_cast<double>(c);
    const Scalar rs = static_cast<Scalar>(1.0 / std::sqrt(var + eps));
    (*rstd)[r] = rs;
    for (int64_t k = 0; k < c; ++k) {
      const Scalar h = static_cast<Scalar>(row[k] - m) * rs;
      (*xhat)[r * c + k] = h;
      out[r * c + k] = h * g[k] + b[k];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [xhat, rstd, rows, c](TensorImpl& self) {
                       TensorImpl& px = self.parent(0);
                       TensorImpl& pg = self.parent(1);
                       TensorImpl& pb = self.parent(2);
                       const Scalar* dy = self.grad.data();
                       if (pg.requires_grad || pb.requires_grad) {
                         std::vector<double> dg(c, 0.0), db(c, 0.0);
                         for (int64_t r = 0; r < rows; ++r) {
                           for (int64_t k = 0; k < c; ++k) {
                             dg[k] += dy[r * c + k] * (*xhat)[r * c + k];
                             db[k] += dy[r * c + k];
                           }
                         }
                         if (pg.requires_grad) {
                           auto& gg = pg.ensure_grad();
                           for (int64_t k = 0; k < c; ++k) gg[k] += static_cast<Scalar>(dg[k]);
                         }
                         if (pb.requires_grad) {
                           auto& gb = pb.ensure_grad();
                           for (int64_t k = 0; k < c; ++k) gb[k] += static_cast<Scalar>(db[k]);
                         }
                       }
                       if (!px.requires_grad) return;
                       auto& gx = px.ensure_grad();
                       for (int64_t r = 0; r < rows; ++r) {
                         double s1 = 0.0, s2 = 0.0;
                         for (int64_t k = 0; k < c; ++k) {
                           const double d = dy[r * c + k] * pg.data[k];
                           s1 += d;
                           s2 += d * (*xhat)[r * c + k];
                         }
                         s1 /= static_cast<double>(c);
                         s2 /= static_cast<double>(c);
                         for (int64_t k = 0; k < c; ++k) {
                           const double d = dy[r * c + k] * pg.data[k];
                           gx[r * c + k] +=
                               static_cast<Scalar>((*rstd)[r] * (d - s1 - (*xhat)[r * c + k] * s2));
                         }
                       }
                     });
}

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps) {
  if (x.rank() < 3) throw ShapeError("instance_norm: expected [N,C,...], got " + shape_str(x.shape()));
  const int64_t n = x.dim(0), c = x.dim(1);
  const int64_t spatial = x.numel() / (n * c);
  if (gamma.numel() != c || beta.numel() != c) {
    throw ShapeError("instance_norm: input " + shape_str(x.shape()) + " vs gamma " +
                     shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()));
  }
  auto xhat = std::make_shared<std::vector<Scalar>>(x.numel());
  auto rstd = std::make_shared<std::vector<Scalar>>(n * c);
  std::vector<Scalar> out(x.numel());
  auto in = x.data();
  auto g = gamma.data(), b = beta.data();
  for (int64_t s = 0; s < n * c; ++s) {
    const int64_t ch = s % c;
    const Scalar* src = in.data() + s * spatial;
    double m = 0.0;
    for (int64_t i = 0; i < spatial; ++i) m += src[i];
    m /= static_cast<double>(spatial);
    double var = 0.0;
    for (int64_t i = 0; i < spatial; ++i) var += (src[i] - m) * (src[i] - m);
    var /= static_cast<double>(spatial);
    const Scalar rs = static_cast<Scalar>(1.0 / std::sqrt(var + eps));
    (*rstd)[s] = rs;
    Scalar* xh = xhat->data() + s * spatial;
    Scalar* dst = out.data() + s * spatial;
    for (int64_t i = 0; i < spatial; ++i) {
      xh[i] = static_cast<Scalar>(src[i] - m) * rs;
      dst[i] = xh[i] * g[ch] + b[ch];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [xhat, rstd, n, c, spatial](TensorImpl& self) {
                       TensorImpl& px = self.parent(0);
                       TensorImpl& pg = self.parent(1);
                       TensorImpl& pb = self.parent(2);
                       std::vector<double> dg(c, 0.0), db(c, 0.0);
                       for (int64_t s = 0; s < n * c; ++s) {
                         const int64_t ch = s % c;
                         const Scalar* dy = self.grad.data() + s * spatial;
                         const Scalar* xh = xhat->data() + s * spatial;
                         double s1 = 0.0, s2 = 0.0;
                         for (int64_t i = 0; i < spatial; ++i) {
                           s1 += dy[i];
                           s2 += static_cast<double>(dy[i]) * xh[i];
                         }
                         dg[ch] += s2;
                         db[ch] += s1;
                         if (!px.requires_grad) continue;
                         Scalar* gx = px.ensure_grad().data() + s * spatial;
                         const double gam = pg.data[ch];
                         const double m1 = s1 / static_cast<double>(spatial);
                         const double m2 = s2 / static_cast<double>(spatial);
                         const double rs = (*rstd)[s];
                         for (int64_t i = 0; i < spatial; ++i) {
                           gx[i] += static_cast<Scalar>(rs * gam * (dy[i] - m1 - xh[i] * m2));
                         }
                       }
                       if (pg.requires_grad) {
                         auto& gg = pg.ensure_grad();
                         for (int64_t k = 0; k < c; ++k) gg[k] += static_cast<Scalar>(dg[k]);
                       }
                       if (pb.requires_grad) {
                         auto& gb = pb.ensure_grad();
                         for (int64_t k = 0; k < c; ++k) gb[k] += static_cast<Scalar>(db[k]);
                       }
                     });
}

Tensor gelu(const Tensor& x) {
  std::vector<Scalar> out(x.numel());
  auto in = x.data();
  for (size_t i = 0; i < out.size(); ++i) {
    const Scalar v = in[i];
    const Scalar t = std::tanh(kGeluSqrt2OverPi * (v + kGeluCubic * v * v * v));
    out[i] = 0.5f * v * (1.0f + t);
  }
  return make_result(x.shape(), std::move(out), {x}, [](TensorImpl& self) {
    TensorImpl& p = self.parent(0);
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) {
      const Scalar v = p.data[i];
      const Scalar t = std::tanh(kGeluSqrt2OverPi * (v + kGeluCubic * v * v * v));
      const Scalar dt = (1.0f - t * t) * kGeluSqrt2OverPi * (1.0f + 3.0f * kGeluCubic * v * v);
      g[i] += self.grad[i] * (0.5f * (1.0f + t) + 0.5f * v * dt);
    }
  });
}

Tensor softmax(const Tensor& x, int axis) {
  const int ax = normalize_axis(axis, x.rank(), x.shape());
  int64_t outer = 1, inner = 1;
  const int64_t len = x.dim(ax);
  for (int i = 0; i < ax; ++i) outer *= x.dim(i);
  for (int64_t i = ax + 1; i < x.rank(); ++i) inner *= x.dim(i);
  std::vector<Scalar> out(x.numel());
  auto in = x.data();
  std::vector<Scalar> tmp(len);
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t base = o * len * inner + i;
      Scalar mx = in[base];
      for (int64_t k = 1; k < len; ++k) mx = std::max(mx, in[base + k * inner]);
      double total = 0.0;
      for (int64_t k = 0; k < len; ++k) {
        tmp[k] = std::exp(in[base + k * inner] - mx);
        total += tmp[k];
      }
      const Scalar inv = static_cast<Scalar>(1.0 / total);
      for (int64_t k = 0; k < len; ++k) out[base + k * inner] = tmp[k] * inv;
    }
  }
  return make_result(x.shape(), std::move(out), {x}, [outer, inner, len](TensorImpl& self) {
    TensorImpl& p = self.parent(0);
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    const auto& y = self.data;
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t i = 0; i < inner; ++i) {
        const int64_t base = o * len * inner + i;
        double dot = 0.0;
        for (int64_t k = 0; k < len; ++k) {
          dot += static_cast<double>(self.grad[base + k * inner]) * y[base + k * inner];
        }
        for (int64_t k = 0; k < len; ++k) {
          const int64_t at = base + k * inner;
          g[at] += y[at] * static_cast<Scalar>(self.grad[at] - dot);
        }
      }
    }
  });
}

}  // namespace swinvftr::ops
