#include <random>
#include <set>

#include "doctest.h"
#include "swinvftr/bench.hpp"
#include "swinvftr/model.hpp"
#include "test_util.hpp"

using namespace swinvftr;
using testutil::randint;
using testutil::random_tensor;

TEST_CASE("encoder and decoder follow the channel and resolution ladder") {
  std::mt19937_64 rng(41);
  const SwinVftr model(ModelConfig::micro());
  const int64_t C = model.config().embed_dim;
  for (int trial = 0; trial < 4; ++trial) {
    const int64_t D = 16 * randint(rng, 1, 2), H = 16 * randint(rng, 1, 2), W = 16 * randint(rng, 1, 2);
    NoGradGuard guard;
    const FeaturePyramid p = model.encode(random_tensor({1, 1, D, H, W}, rng, 0, 1));
    REQUIRE(p.skips.size() == 3);
    for (int64_t s = 0; s < 3; ++s) {
      const int64_t f = 2 << s;
      CHECK(p.skips[s].shape() == Shape{1, C << s, D / f, H / f, W / f});
    }
    CHECK(p.bottleneck.shape() == Shape{1, 8 * C, D / 16, H / 16, W / 16});
    CHECK(p.raw.shape() == Shape{1, C / 2, D, H, W});
    const Tensor probs = model.decode(p);
    CHECK(probs.shape() == Shape{1, 4, D, H, W});
    for (int64_t v = 0; v < D * H * W; v += 97) {
      double s = 0;
      for (int64_t k = 0; k < 4; ++k) s += probs.data()[k * D * H * W + v];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
}

TEST_CASE("stage dims halve per merge") {
  const SwinVftr model(ModelConfig::micro());
  const std::vector<Dims3> d = model.stage_dims({32, 64, 16});
  REQUIRE(d.size() == 4);
  CHECK(d[0] == Dims3{16, 32, 8});
  CHECK(d[3] == Dims3{2, 4, 1});
}

TEST_CASE("inputs not divisible by the downsampling factor are rejected") {
  const SwinVftr model(ModelConfig::micro());
  NoGradGuard guard;
  CHECK_THROWS_AS(model.encode(Tensor::zeros({1, 1, 16, 16, 24})), ShapeError);
  CHECK_THROWS_AS(model.encode(Tensor::zeros({1, 2, 16, 16, 16})), ShapeError);
  CHECK_THROWS_AS(model.encode(Tensor::zeros({16, 16, 16})), ShapeError);
}

TEST_CASE("model config round-trips through key values and validates") {
  ModelConfig c = ModelConfig::desk();
  c.use_va = false;
  c.mrf_mode = MrfMode::Spatial3d;
  c.window = {2, 4, 4};
  c.seed = 99;
  KeyValues kv = c.to_key_values();
  const ModelConfig back = ModelConfig::from_key_values(kv);
  CHECK(kv.empty());
  CHECK(back.compatible_with(c));
  CHECK(back.seed == 99);

  auto invalid = [](auto mutate) {
    ModelConfig m = ModelConfig::desk();
    mutate(m);
    CHECK_THROWS_AS(m.validate(), ConfigError);
  };
  invalid([](ModelConfig& m) { m.depth = 3; });
  invalid([](ModelConfig& m) { m.heads = {3, 6, 12}; });
  invalid([](ModelConfig& m) { m.heads = {5, 6, 12, 24}; });
  invalid([](ModelConfig& m) { m.embed_dim = 7; });
  invalid([](ModelConfig& m) { m.window = {0, 4, 4}; });
  KeyValues bad{{"mrf_mode", "diagonal"}};
  CHECK_THROWS_AS(ModelConfig::from_key_values(bad), ConfigError);
  KeyValues bad_bool{{"use_va", "maybe"}};
  CHECK_THROWS_AS(ModelConfig::from_key_values(bad_bool), ConfigError);
}

TEST_CASE("ablation flags change exactly the expected parameter groups") {
  auto names = [](const ModelConfig& c) {
    std::set<std::string> out;
    const SwinVftr m(c);
    for (const Parameter& p : m.parameters().params()) out.insert(p.name);
    return out;
  };
  const std::set<std::string> full = names(ModelConfig::micro());
  ModelConfig no_va = ModelConfig::micro();
  no_va.use_va = false;
  ModelConfig no_mrf = ModelConfig::micro();
  no_mrf.use_mrf = false;
  auto count_with = [](const std::set<std::string>& s, const std::string& needle) {
    int n = 0;
    for (const auto& x : s) n += x.find(needle) != std::string::npos;
    return n;
  };
  CHECK(count_with(full, ".va.") > 0);
  CHECK(count_with(names(no_va), ".va.") == 0);
  CHECK(count_with(names(no_va), ".skip.res.") > 0);
  CHECK(count_with(full, ".mrf.") > 0);
  CHECK(count_with(names(no_mrf), ".mrf.") == 0);
  CHECK(count_with(names(no_mrf), ".mlp.") > 0);

  const BenchReport r = run_bench(ModelConfig::desk(), {{8, 8, 8}});
  CHECK(r.params_mrf_model == SwinVftr(ModelConfig::desk()).parameters().scalar_count());
  CHECK(r.params_mrf_model == 4682602);
  CHECK(r.params_mlp_model == 4976362);
}

TEST_CASE("same seed gives identical weights, different seed does not") {
  ModelConfig c = ModelConfig::micro();
  c.seed = 3;
  const SwinVftr a(c), b(c);
  c.seed = 4;
  const SwinVftr d(c);
  const auto& pa = a.parameters().params();
  bool all_equal = true, any_diff = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    auto x = pa[i].tensor.data(), y = b.parameters().params()[i].tensor.data(), z = d.parameters().params()[i].tensor.data();
    all_equal &= std::equal(x.begin(), x.end(), y.begin());
    any_diff |= !std::equal(x.begin(), x.end(), z.begin());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}
