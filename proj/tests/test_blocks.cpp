#include <random>

#include "doctest.h"
#include "swinvftr/bench.hpp"
#include "swinvftr/swin_block.hpp"
#include "swinvftr/va_block.hpp"
#include "test_util.hpp"

using namespace swinvftr;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

void zero_params(ParameterStore& store, const std::string& prefix) {
  for (Parameter& p : store.params())
    if (p.name.rfind(prefix, 0) == 0) {
      auto d = p.tensor.mutable_data();
      std::fill(d.begin(), d.end(), Scalar{0});
    }
}

}  // namespace

TEST_CASE("MRF parameter count matches the per-branch formula") {
  for (int64_t c : {4, 8, 24}) {
    ParameterStore seq, sp;
    MrfBlock a(Scope(seq, "m"), c, MrfMode::Sequence1d);
    MrfBlock b(Scope(sp, "m"), c, MrfMode::Spatial3d);
    // conv1 C^2+C, depthwise 2C, dilated kC^2+C, fuse C^2+C.
    CHECK(seq.scalar_count() == 5 * c * c + 5 * c);
    CHECK(sp.scalar_count() == 29 * c * c + 5 * c);
    CHECK(mrf_param_count(c, MrfMode::Sequence1d) == seq.scalar_count());
    CHECK(mrf_param_count(c, MrfMode::Spatial3d) == sp.scalar_count());
    ParameterStore mlp;
    MlpBlock m(Scope(mlp, "f"), c, 4 * c);
    CHECK(mlp_param_count(c, 4) == mlp.scalar_count());
  }
}

TEST_CASE("MRF block keeps the token shape and outputs zero with a zeroed fuse") {
  std::mt19937_64 rng(31);
  for (MrfMode mode : {MrfMode::Sequence1d, MrfMode::Spatial3d}) {
    ParameterStore store;
    MrfBlock mrf(Scope(store, "m"), 6, mode);
    store.initialize(4);
    const TokenGrid x{{2, 3, 4}, random_tensor({2, 24, 6}, rng)};
    const TokenGrid y = mrf.forward(x);
    CHECK(y.dims == x.dims);
    CHECK(y.tokens.shape() == x.tokens.shape());
    zero_params(store, "m.fuse");
    CHECK(max_abs_diff(mrf.forward(x).tokens.data(), std::vector<double>(2 * 24 * 6, 0.0)) == 0.0);
  }
}

TEST_CASE("sequence MRF mixes neighbours only along the flattened token order") {
  ParameterStore store;
  MrfBlock mrf(Scope(store, "m"), 2, MrfMode::Sequence1d);
  store.initialize(5);
  std::vector<Scalar> a(2 * 12, 0), b(2 * 12, 0);
  b[2 * 11] = 1;  // perturb the last token only
  const Tensor ya = mrf.forward({{1, 3, 4}, Tensor::from_data({1, 12, 2}, a)}).tokens;
  const Tensor yb = mrf.forward({{1, 3, 4}, Tensor::from_data({1, 12, 2}, b)}).tokens;
  // Receptive field of the dilated k=3 branch: tokens 9, 11 (and 11 itself).
  for (int64_t t = 0; t < 12; ++t) {
    double d = 0;
    for (int64_t c = 0; c < 2; ++c) d += std::abs(ya.at({0, t, c}) - yb.at({0, t, c}));
    if (t != 9 && t != 11) CHECK(d == 0.0);
  }
}

TEST_CASE("Swin sub-block is the identity when its residual branches output zero") {
  std::mt19937_64 rng(32);
  SwinBlockOptions opts;
  opts.channels = 8;
  opts.heads = 2;
  opts.window = {2, 2, 2};
  for (bool use_mrf : {true, false})
    for (bool shifted : {false, true}) {
      opts.use_mrf = use_mrf;
      ParameterStore store;
      SwinSubBlock block(Scope(store, "b"), opts, shifted);
      store.initialize(6);
      const TokenGrid x{{4, 4, 2}, random_tensor({1, 32, 8}, rng)};
      const TokenGrid y = block.forward(x);
      CHECK(max_abs_diff(y.tokens.data(), x.tokens.data()) > 0.0);
      zero_params(store, "b.attn.proj");
      zero_params(store, use_mrf ? "b.mrf.fuse" : "b.mlp.fc2");
      CHECK(max_abs_diff(block.forward(x).tokens.data(), x.tokens.data()) == 0.0);
    }
}

TEST_CASE("shifted sub-block attention never crosses regions") {
  std::mt19937_64 rng(33);
  SwinBlockOptions opts;
  opts.channels = 4;
  opts.heads = 1;
  opts.window = {2, 2, 2};
  ParameterStore store;
  SwinSubBlock block(Scope(store, "b"), opts, true);
  store.initialize(7);
  const Dims3 grid{4, 4, 4};
  std::vector<Scalar> probs;
  block.forward({grid, random_tensor({1, 64, 4}, rng, -3, 3)}, &probs);
  const AttentionMask mask = build_shift_mask(grid, block.spec);
  REQUIRE(probs.size() == mask.values.data().size());
  double worst = 0;
  for (size_t i = 0; i < probs.size(); ++i)
    if (mask.values.data()[i] != 0) worst = std::max(worst, static_cast<double>(probs[i]));
  CHECK(worst < 1e-6);
}

TEST_CASE("VA block is the identity with zeroed branches") {
  std::mt19937_64 rng(34);
  ParameterStore store;
  VaBlock va(Scope(store, "va"), 4);
  store.initialize(8);
  const Tensor x = random_tensor({1, 4, 3, 4, 5}, rng);
  CHECK(va.forward(x).shape() == x.shape());
  zero_params(store, "va");
  CHECK(max_abs_diff(va.forward(x).data(), x.data()) == 0.0);
}

TEST_CASE("VA block is the sum of its branches and each branch is affine") {
  std::mt19937_64 rng(35);
  ParameterStore store;
  VaBlock va(Scope(store, "va"), 3);
  store.initialize(9);
  const Tensor x = random_tensor({1, 3, 4, 4, 4}, rng), y = random_tensor({1, 3, 4, 4, 4}, rng);
  const Tensor out = va.forward(x), s = va.spatial_branch(x), c = va.channel_branch(x);
  std::vector<double> sum(out.numel());
  for (int64_t i = 0; i < out.numel(); ++i) sum[i] = double(s.data()[i]) + c.data()[i] + x.data()[i];
  CHECK(max_abs_diff(out.data(), sum) < 1e-5);

  const Tensor zero = Tensor::zeros(x.shape());
  const Tensor xy = ops::add(x, y);
  for (auto branch : {&VaBlock::spatial_branch, &VaBlock::channel_branch}) {
    const Tensor fxy = (va.*branch)(xy), fx = (va.*branch)(x), fy = (va.*branch)(y), f0 = (va.*branch)(zero);
    std::vector<double> expect(fxy.numel());
    for (int64_t i = 0; i < fxy.numel(); ++i) expect[i] = double(fx.data()[i]) + fy.data()[i] - f0.data()[i];
    CHECK(max_abs_diff(fxy.data(), expect) < 1e-5);
  }
}

TEST_CASE("VA channel branch acts per voxel") {
  ParameterStore store;
  VaBlock va(Scope(store, "va"), 2);
  store.initialize(10);
  std::vector<Scalar> a(2 * 27, 0);
  a[13] = 1;  // channel 0, centre voxel
  const Tensor out = va.channel_branch(Tensor::from_data({1, 2, 3, 3, 3}, a));
  const Tensor base = va.channel_branch(Tensor::zeros({1, 2, 3, 3, 3}));
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t v = 0; v < 27; ++v)
      if (v != 13) CHECK(out.data()[c * 27 + v] == base.data()[c * 27 + v]);
}
