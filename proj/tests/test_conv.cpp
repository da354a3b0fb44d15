#include <random>

#include "doctest.h"
#include "swinvftr/ops.hpp"
#include "test_util.hpp"

using namespace swinvftr;
using testutil::max_abs_diff;
using testutil::randint;
using testutil::random_tensor;

namespace {

std::vector<double> naive_conv3d(const Tensor& x, const Tensor& w, const Tensor& b, const ops::Conv3dOptions& o) {
  const int64_t N = x.dim(0), Cin = x.dim(1), Cout = w.dim(0), G = o.groups;
  const int64_t cpg_in = Cin / G, cpg_out = Cout / G;
  Dims3 in{x.dim(2), x.dim(3), x.dim(4)}, k{w.dim(2), w.dim(3), w.dim(4)}, out;
  for (int a = 0; a < 3; ++a) out[a] = (in[a] + 2 * o.padding[a] - o.dilation[a] * (k[a] - 1) - 1) / o.stride[a] + 1;
  std::vector<double> y(N * Cout * out[0] * out[1] * out[2]);
  size_t idx = 0;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t z = 0; z < out[0]; ++z)
        for (int64_t yy = 0; yy < out[1]; ++yy)
          for (int64_t xx = 0; xx < out[2]; ++xx, ++idx) {
            double s = b.defined() ? b.data()[co] : 0.0;
            const int64_t g = co / cpg_out;
            for (int64_t ci = 0; ci < cpg_in; ++ci)
              for (int64_t kz = 0; kz < k[0]; ++kz)
                for (int64_t ky = 0; ky < k[1]; ++ky)
                  for (int64_t kx = 0; kx < k[2]; ++kx) {
                    const int64_t iz = z * o.stride[0] - o.padding[0] + kz * o.dilation[0];
                    const int64_t iy = yy * o.stride[1] - o.padding[1] + ky * o.dilation[1];
                    const int64_t ix = xx * o.stride[2] - o.padding[2] + kx * o.dilation[2];
                    if (iz < 0 || iy < 0 || ix < 0 || iz >= in[0] || iy >= in[1] || ix >= in[2]) continue;
                    s += static_cast<double>(x.at({n, g * cpg_in + ci, iz, iy, ix})) * w.at({co, ci, kz, ky, kx});
                  }
            y[idx] = s;
          }
  return y;
}

/// Every input voxel scatters W[ci, co, tap] into output voxel 2 * p + tap.
std::vector<double> scatter_conv_transpose(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int64_t N = x.dim(0), Cin = x.dim(1), Cout = w.dim(1);
  const int64_t D = x.dim(2), H = x.dim(3), W = x.dim(4);
  std::vector<double> y(N * Cout * 8 * D * H * W, 0.0);
  auto at = [&](int64_t n, int64_t c, int64_t z, int64_t yy, int64_t xx) -> double& {
    return y[(((n * Cout + c) * 2 * D + z) * 2 * H + yy) * 2 * W + xx];
  };
  for (int64_t n = 0; n < N; ++n)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t z = 0; z < 2 * D; ++z)
        for (int64_t yy = 0; yy < 2 * H; ++yy)
          for (int64_t xx = 0; xx < 2 * W; ++xx) at(n, co, z, yy, xx) = b.data()[co];
  for (int64_t n = 0; n < N; ++n)
    for (int64_t ci = 0; ci < Cin; ++ci)
      for (int64_t z = 0; z < D; ++z)
        for (int64_t yy = 0; yy < H; ++yy)
          for (int64_t xx = 0; xx < W; ++xx)
            for (int64_t co = 0; co < Cout; ++co)
              for (int64_t tz = 0; tz < 2; ++tz)
                for (int64_t ty = 0; ty < 2; ++ty)
                  for (int64_t tx = 0; tx < 2; ++tx)
                    at(n, co, 2 * z + tz, 2 * yy + ty, 2 * xx + tx) +=
                        static_cast<double>(x.at({n, ci, z, yy, xx})) * w.at({ci, co, tz, ty, tx});
  return y;
}

}  // namespace

TEST_CASE("conv3d matches the direct-summation oracle on random configurations") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    ops::Conv3dOptions o;
    const int64_t groups = randint(rng, 1, 3);
    o.groups = groups;
    const int64_t cin = groups * randint(rng, 1, 3), cout = groups * randint(rng, 1, 3);
    Dims3 k, in;
    for (int a = 0; a < 3; ++a) {
      k[a] = randint(rng, 1, 3);
      o.stride[a] = randint(rng, 1, 2);
      o.dilation[a] = randint(rng, 1, 2);
      o.padding[a] = randint(rng, 0, 2);
      in[a] = randint(rng, o.dilation[a] * (k[a] - 1) + 1, 7);
    }
    Tensor x = random_tensor({randint(rng, 1, 2), cin, in[0], in[1], in[2]}, rng);
    Tensor w = random_tensor({cout, cin / groups, k[0], k[1], k[2]}, rng);
    Tensor b = trial % 2 ? random_tensor({cout}, rng) : Tensor{};
    const Tensor y = ops::conv3d(x, w, b, o);
    CHECK(max_abs_diff(y.data(), naive_conv3d(x, w, b, o)) < 1e-5);
  }
}

TEST_CASE("conv3d keeps spatial size under same padding") {
  std::mt19937_64 rng(12);
  Tensor x = random_tensor({1, 2, 5, 6, 7}, rng), w = random_tensor({3, 2, 3, 3, 3}, rng);
  const ops::Conv3dOptions o{{1, 1, 1}, {2, 2, 2}, {2, 2, 2}, 1};
  CHECK(ops::conv3d(x, w, {}, o).shape() == Shape{1, 3, 5, 6, 7});
}

TEST_CASE("conv3d rejects bad configurations") {
  CHECK_THROWS_AS(ops::conv3d(Tensor::zeros({1, 3, 4, 4, 4}), Tensor::zeros({2, 2, 3, 3, 3})), ShapeError);
  CHECK_THROWS_AS(ops::conv3d(Tensor::zeros({1, 2, 2, 2, 2}), Tensor::zeros({2, 2, 3, 3, 3})), ShapeError);
  const ops::Conv3dOptions grouped{{1, 1, 1}, {0, 0, 0}, {1, 1, 1}, 2};
  CHECK_THROWS_AS(ops::conv3d(Tensor::zeros({1, 3, 2, 2, 2}), Tensor::zeros({2, 1, 1, 1, 1}), {}, grouped),
                  ShapeError);
}

TEST_CASE("conv_transpose3d matches the scatter-add oracle") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const int64_t cin = randint(rng, 1, 4), cout = randint(rng, 1, 4);
    Tensor x = random_tensor({randint(rng, 1, 2), cin, randint(rng, 1, 3), randint(rng, 1, 3), randint(rng, 1, 3)}, rng);
    Tensor w = random_tensor({cin, cout, 2, 2, 2}, rng), b = random_tensor({cout}, rng);
    const Tensor y = ops::conv_transpose3d(x, w, b);
    CHECK(y.shape() == Shape{x.dim(0), cout, 2 * x.dim(2), 2 * x.dim(3), 2 * x.dim(4)});
    CHECK(max_abs_diff(y.data(), scatter_conv_transpose(x, w, b)) < 1e-5);
  }
}

TEST_CASE("conv_transpose3d supports only kernel 2 stride 2") {
  CHECK_THROWS_AS(ops::conv_transpose3d(Tensor::zeros({1, 1, 2, 2, 2}), Tensor::zeros({1, 1, 2, 2, 2}), {}, 3, 3),
                  UnsupportedConfig);
}

TEST_CASE("conv3d input gradient equals the adjoint of the forward map") {
  // <conv(x), g> = <x, conv^T(g)>: check by probing with one-hot inputs.
  std::mt19937_64 rng(14);
  const ops::Conv3dOptions o{{2, 1, 1}, {1, 0, 1}, {1, 2, 1}, 1};
  Tensor w = random_tensor({2, 2, 3, 2, 3}, rng);
  Tensor x = random_tensor({1, 2, 4, 5, 4}, rng);
  x.set_requires_grad(true);
  const Tensor y0 = ops::conv3d(x, w, {}, o);
  Tensor g = random_tensor(y0.shape(), rng);
  ops::sum(ops::mul(ops::conv3d(x, w, {}, o), g)).backward();
  for (int64_t i = 0; i < x.numel(); i += 7) {
    Tensor e = Tensor::zeros(x.shape());
    e.mutable_data()[i] = 1;
    const Tensor ye = ops::conv3d(e, w, {}, o);
    double ref = 0;
    for (int64_t j = 0; j < ye.numel(); ++j) ref += static_cast<double>(ye.data()[j]) * g.data()[j];
    CHECK(x.grad()[i] == doctest::Approx(ref).epsilon(1e-5));
  }
}
