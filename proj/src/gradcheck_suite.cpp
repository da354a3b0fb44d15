#include "swinvftr/gradcheck_suite.hpp"

#include <algorithm>
#include <chrono>
#include <memory>
#include <ostream>
#include <random>

#include "swinvftr/losses.hpp"
#include "swinvftr/model.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

namespace {

using Case = std::pair<std::string, std::function<GradCheckReport()>>;

class Fixture {
 public:
  explicit Fixture(uint64_t seed) : rng_(seed) {}

  Tensor random(Shape shape, Scalar scale = 1.0f) {
    std::uniform_real_distribution<Scalar> u(-scale, scale);
    std::vector<Scalar> v(numel(shape));
    for (Scalar& x : v) x = u(rng_);
    return Tensor::from_data(std::move(shape), std::move(v));
  }

  Tensor positive(Shape shape) {
    std::uniform_real_distribution<Scalar> u(0.05f, 1.0f);
    std::vector<Scalar> v(numel(shape));
    for (Scalar& x : v) x = u(rng_);
    return Tensor::from_data(std::move(shape), std::move(v));
  }

  /// Scalar sum(t * R) with a fixed random R, so every output entry matters.
  std::function<Tensor(const Tensor&)> probe(const Shape& shape) {
    Tensor r = random(shape);
    return [r](const Tensor& t) { return ops::sum(ops::mul(t, r)); };
  }

  /// Replaces the deterministic init with uniform values so norms, biases and
  /// gains all carry non-trivial gradients.
  void randomize(ParameterStore& store, Scalar scale) {
    std::uniform_real_distribution<Scalar> u(-scale, scale);
    for (Parameter& p : store.params()) {
      for (Scalar& x : p.tensor.mutable_data()) x = p.init.kind == InitKind::Ones ? 1.0f + u(rng_) : u(rng_);
    }
  }

  static std::vector<NamedTensor> params(const ParameterStore& store) {
    std::vector<NamedTensor> out;
    for (const Parameter& p : store.params()) out.emplace_back(p.name, p.tensor);
    return out;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Shapes are built once; `body` runs under grad_check with a fresh output probe.
template <typename Body>
GradCheckReport check(Fixture& fx, const Shape& out_shape, Body body, std::vector<NamedTensor> inputs,
                      GradCheckOptions options = {}) {
  auto probe = fx.probe(out_shape);
  return grad_check([&] { return probe(body()); }, inputs, options);
}

std::vector<Case> ops_cases(Fixture& fx) {
  std::vector<Case> cases;
  cases.emplace_back("add", [&fx] {
    Tensor a = fx.random({2, 3, 4}), b = fx.random({2, 3, 4});
    return check(fx, {2, 3, 4}, [&] { return ops::add(a, b); }, {{"a", a}, {"b", b}});
  });
  cases.emplace_back("sub", [&fx] {
    Tensor a = fx.random({2, 3, 4}), b = fx.random({2, 3, 4});
    return check(fx, {2, 3, 4}, [&] { return ops::sub(a, b); }, {{"a", a}, {"b", b}});
  });
  cases.emplace_back("mul", [&fx] {
    Tensor a = fx.random({2, 3, 4}), b = fx.random({2, 3, 4});
    return check(fx, {2, 3, 4}, [&] { return ops::mul(a, b); }, {{"a", a}, {"b", b}});
  });
  cases.emplace_back("scale", [&fx] {
    Tensor a = fx.random({5, 3});
    return check(fx, {5, 3}, [&] { return ops::scale(a, -1.7f); }, {{"a", a}});
  });
  cases.emplace_back("sum", [&fx] {
    Tensor a = fx.random({4, 5});
    return check(fx, {1}, [&] { return ops::sum(a); }, {{"a", a}});
  });
  cases.emplace_back("mean", [&fx] {
    Tensor a = fx.random({4, 5});
    return check(fx, {1}, [&] { return ops::mean(a); }, {{"a", a}});
  });
  cases.emplace_back("reshape", [&fx] {
    Tensor a = fx.random({2, 3, 4});
    return check(fx, {6, 4}, [&] { return ops::reshape(a, {6, 4}); }, {{"a", a}});
  });
  cases.emplace_back("permute", [&fx] {
    Tensor a = fx.random({2, 3, 4});
    return check(fx, {4, 2, 3}, [&] { return ops::permute(a, {2, 0, 1}); }, {{"a", a}});
  });
  cases.emplace_back("concat", [&fx] {
    Tensor a = fx.random({2, 3, 4}), b = fx.random({2, 2, 4});
    return check(fx, {2, 5, 4}, [&] { return ops::concat({a, b}, 1); }, {{"a", a}, {"b", b}});
  });
  cases.emplace_back("gather_rows", [&fx] {
    Tensor x = fx.random({2, 5, 3});
    const std::vector<int64_t> index{4, -1, 0, 2, 2, 1};
    return check(fx, {2, 3, 6}, [&] { return ops::gather_rows(x, index, 2); }, {{"x", x}});
  });
  cases.emplace_back("linear", [&fx] {
    Tensor x = fx.random({3, 5}), w = fx.random({4, 5}), b = fx.random({4});
    return check(fx, {3, 4}, [&] { return ops::linear(x, w, b); }, {{"x", x}, {"weight", w}, {"bias", b}});
  });
  cases.emplace_back("layer_norm", [&fx] {
    Tensor x = fx.random({3, 6}), g = fx.random({6}), b = fx.random({6});
    return check(fx, {3, 6}, [&] { return ops::layer_norm(x, g, b); }, {{"x", x}, {"gamma", g}, {"beta", b}});
  });
  cases.emplace_back("instance_norm", [&fx] {
    Tensor x = fx.random({2, 3, 2, 3, 2}), g = fx.random({3}), b = fx.random({3});
    return check(fx, {2, 3, 2, 3, 2}, [&] { return ops::instance_norm(x, g, b); },
                 {{"x", x}, {"gamma", g}, {"beta", b}});
  });
  cases.emplace_back("gelu", [&fx] {
    Tensor x = fx.random({24}, 3.0f);
    return check(fx, {24}, [&] { return ops::gelu(x); }, {{"x", x}});
  });
  cases.emplace_back("softmax_axis1", [&fx] {
    Tensor x = fx.random({2, 4, 3}, 2.0f);
    return check(fx, {2, 4, 3}, [&] { return ops::softmax(x, 1); }, {{"x", x}});
  });
  cases.emplace_back("softmax_last", [&fx] {
    Tensor x = fx.random({3, 5}, 2.0f);
    return check(fx, {3, 5}, [&] { return ops::softmax(x, -1); }, {{"x", x}});
  });
  return cases;
}

std::vector<Case> conv_cases(Fixture& fx) {
  std::vector<Case> cases;
  auto conv_case = [&fx](Shape xs, Shape ws, ops::Conv3dOptions o, Shape out) {
    return [&fx, xs, ws, o, out] {
      Tensor x = fx.random(xs), w = fx.random(ws, 0.5f), b = fx.random({ws[0]});
      return check(fx, out, [&] { return ops::conv3d(x, w, b, o); }, {{"x", x}, {"weight", w}, {"bias", b}});
    };
  };
  cases.emplace_back("conv3d_k3", conv_case({2, 3, 4, 4, 4}, {4, 3, 3, 3, 3}, same_padding(3), {2, 4, 4, 4, 4}));
  cases.emplace_back("conv3d_stride2",
                     conv_case({1, 2, 5, 5, 5}, {3, 2, 3, 3, 3}, {{2, 2, 2}, {1, 1, 1}, {1, 1, 1}, 1}, {1, 3, 3, 3, 3}));
  cases.emplace_back("conv3d_dilated", conv_case({1, 2, 5, 5, 5}, {2, 2, 3, 3, 3}, same_padding(3, 2), {1, 2, 5, 5, 5}));
  cases.emplace_back("conv3d_grouped", conv_case({1, 4, 3, 3, 3}, {4, 2, 3, 3, 3}, same_padding(3, 1, 2), {1, 4, 3, 3, 3}));
  cases.emplace_back("conv3d_depthwise_k1",
                     conv_case({2, 3, 2, 3, 2}, {3, 1, 1, 1, 1}, {{1, 1, 1}, {0, 0, 0}, {1, 1, 1}, 3}, {2, 3, 2, 3, 2}));
  cases.emplace_back("conv3d_sequence_dilated",
                     conv_case({1, 3, 1, 1, 9}, {3, 3, 1, 1, 3}, {{1, 1, 1}, {0, 0, 2}, {1, 1, 2}, 1}, {1, 3, 1, 1, 9}));
  cases.emplace_back("conv_transpose3d", [&fx] {
    Tensor x = fx.random({2, 3, 2, 2, 2}), w = fx.random({3, 2, 2, 2, 2}, 0.5f), b = fx.random({2});
    return check(fx, {2, 2, 4, 4, 4}, [&] { return ops::conv_transpose3d(x, w, b); },
                 {{"x", x}, {"weight", w}, {"bias", b}});
  });
  return cases;
}

std::vector<Case> windowing_cases(Fixture& fx) {
  std::vector<Case> cases;
  auto partition_case = [&fx](Dims3 dims, WindowSpec spec) {
    return [&fx, dims, spec] {
      const int64_t L = dims[0] * dims[1] * dims[2];
      Tensor t = fx.random({2, L, 3});
      const WindowLayout layout = make_window_layout(dims, spec);
      return check(fx, {2 * layout.num_windows, layout.window_volume, 3},
                   [&] { return window_partition({dims, t}, spec); }, {{"tokens", t}});
    };
  };
  cases.emplace_back("window_partition", partition_case({4, 4, 4}, WindowSpec::regular({2, 2, 2})));
  cases.emplace_back("window_partition_shift_pad", partition_case({3, 5, 4}, WindowSpec::shifted({2, 2, 2})));
  cases.emplace_back("window_reverse_shift_pad", [&fx] {
    const Dims3 dims{3, 4, 5};
    const WindowSpec spec = WindowSpec::shifted({2, 2, 2});
    const WindowLayout layout = make_window_layout(dims, spec);
    Tensor w = fx.random({layout.num_windows, layout.window_volume, 3});
    return check(fx, {1, 60, 3}, [&] { return window_reverse(w, dims, spec).tokens; }, {{"windows", w}});
  });
  cases.emplace_back("cyclic_shift", [&fx] {
    const Dims3 dims{2, 3, 4};
    Tensor t = fx.random({1, 24, 2});
    return check(fx, {1, 24, 2}, [&] { return cyclic_shift({dims, t}, {1, 2, 3}).tokens; }, {{"tokens", t}});
  });
  cases.emplace_back("patch_partition", [&fx] {
    ParameterStore store;
    const Linear proj(Scope(store, "proj"), 16, 5);
    fx.randomize(store, 0.5f);
    Tensor v = fx.random({1, 2, 4, 4, 4});
    auto inputs = Fixture::params(store);
    inputs.emplace_back("volume", v);
    return check(fx, {1, 8, 5}, [&] { return patch_partition(v, 2, proj).tokens; }, inputs);
  });
  cases.emplace_back("patch_merging", [&fx] {
    ParameterStore store;
    const PatchMerging merge(Scope(store, "merge"), 3);
    fx.randomize(store, 0.5f);
    Tensor t = fx.random({1, 16, 3});
    auto inputs = Fixture::params(store);
    inputs.emplace_back("tokens", t);
    return check(fx, {1, 2, 6}, [&] { return merge({{2, 4, 2}, t}).tokens; }, inputs);
  });
  return cases;
}

std::vector<Case> attention_cases(Fixture& fx) {
  std::vector<Case> cases;
  cases.emplace_back("attention_core_masked", [&fx] {
    const Dims3 dims{4, 4, 4};
    const AttentionMask mask = build_shift_mask(dims, WindowSpec::shifted({2, 2, 2}));
    Tensor qkv = fx.random({mask.num_windows, 8, 12}), bias = fx.random({2, 8, 8});
    return check(fx, {mask.num_windows, 8, 4}, [&] { return attention_core(qkv, 2, bias, mask.values); },
                 {{"qkv", qkv}, {"bias", bias}});
  });
  cases.emplace_back("window_attention", [&fx] {
    ParameterStore store;
    const WindowAttention attn(Scope(store, "attn"), 4, 2, {2, 2, 2}, true);
    fx.randomize(store, 0.5f);
    Tensor w = fx.random({2, 8, 4});
    auto inputs = Fixture::params(store);
    inputs.emplace_back("windows", w);
    return check(fx, {2, 8, 4}, [&] { return attn.forward(w, nullptr); }, inputs);
  });
  return cases;
}

Case module_case(Fixture& fx, std::string name, Dims3 dims, int64_t channels,
                 std::function<void(ParameterStore&)> build, std::function<TokenGrid(const TokenGrid&)> run_fn) {
  return {std::move(name), [&fx, dims, channels, build, run_fn] {
            ParameterStore store;
            build(store);
            fx.randomize(store, 0.4f);
            Tensor t = fx.random({1, dims[0] * dims[1] * dims[2], channels});
            auto inputs = Fixture::params(store);
            inputs.emplace_back("tokens", t);
            return check(fx, t.shape(), [&] { return run_fn({dims, t}).tokens; }, inputs);
          }};
}

std::vector<Case> swin_cases(Fixture& fx) {
  std::vector<Case> cases;
  auto mrf = std::make_shared<MrfBlock>();
  cases.push_back(module_case(
      fx, "mrf_sequence1d", {2, 2, 3}, 4, [mrf](ParameterStore& s) { *mrf = MrfBlock(Scope(s, "mrf"), 4, MrfMode::Sequence1d); },
      [mrf](const TokenGrid& g) { return mrf->forward(g); }));
  auto mrf3 = std::make_shared<MrfBlock>();
  cases.push_back(module_case(
      fx, "mrf_spatial3d", {3, 3, 3}, 3, [mrf3](ParameterStore& s) { *mrf3 = MrfBlock(Scope(s, "mrf"), 3, MrfMode::Spatial3d); },
      [mrf3](const TokenGrid& g) { return mrf3->forward(g); }));
  auto mlp = std::make_shared<MlpBlock>();
  cases.push_back(module_case(
      fx, "mlp", {2, 2, 2}, 4, [mlp](ParameterStore& s) { *mlp = MlpBlock(Scope(s, "mlp"), 4, 8); },
      [mlp](const TokenGrid& g) { return TokenGrid{g.dims, mlp->forward(g.tokens)}; }));
  SwinBlockOptions o;
  o.channels = 4;
  o.heads = 2;
  o.window = {2, 2, 2};
  auto shifted = std::make_shared<SwinSubBlock>();
  cases.push_back(module_case(
      fx, "swin_sub_block_shifted_padded", {3, 4, 4}, 4,
      [shifted, o](ParameterStore& s) { *shifted = SwinSubBlock(Scope(s, "block"), o, true); },
      [shifted](const TokenGrid& g) { return shifted->forward(g); }));
  auto pair = std::make_shared<SwinBlockPair>();
  SwinBlockOptions mlp_options = o;
  mlp_options.use_mrf = false;
  cases.push_back(module_case(
      fx, "swin_block_pair", {4, 4, 4}, 4, [pair, o](ParameterStore& s) { *pair = SwinBlockPair(Scope(s, "pair"), o); },
      [pair](const TokenGrid& g) { return pair->forward(g); }));
  auto mlp_pair = std::make_shared<SwinBlockPair>();
  cases.push_back(module_case(
      fx, "swin_block_pair_mlp", {2, 4, 4}, 4,
      [mlp_pair, mlp_options](ParameterStore& s) { *mlp_pair = SwinBlockPair(Scope(s, "pair"), mlp_options); },
      [mlp_pair](const TokenGrid& g) { return mlp_pair->forward(g); }));
  return cases;
}

std::vector<Case> va_cases(Fixture& fx) {
  std::vector<Case> cases;
  cases.emplace_back("va_block", [&fx] {
    ParameterStore store;
    const VaBlock va(Scope(store, "va"), 3);
    fx.randomize(store, 0.4f);
    Tensor x = fx.random({1, 3, 3, 4, 4});
    auto inputs = Fixture::params(store);
    inputs.emplace_back("x", x);
    return check(fx, x.shape(), [&] { return va.forward(x); }, inputs);
  });
  cases.emplace_back("residual_conv_block", [&fx] {
    ParameterStore store;
    const ResidualConvBlock block(Scope(store, "res"), 2, 3);
    fx.randomize(store, 0.4f);
    Tensor x = fx.random({1, 2, 3, 3, 4});
    auto inputs = Fixture::params(store);
    inputs.emplace_back("x", x);
    return check(fx, {1, 3, 3, 3, 4}, [&] { return block.forward(x); }, inputs);
  });
  return cases;
}

std::vector<uint8_t> random_labels(Fixture& fx, int64_t n) {
  std::uniform_int_distribution<int> pick(0, 3);
  std::vector<uint8_t> labels(n);
  for (auto& l : labels) l = static_cast<uint8_t>(pick(fx.rng()));
  return labels;
}

std::vector<Case> loss_cases(Fixture& fx) {
  std::vector<Case> cases;
  cases.emplace_back("dice_loss", [&fx] {
    const Shape spatial{3, 3, 2};
    Tensor p = fx.positive({2, 4, 3, 3, 2});
    const Tensor target = one_hot(random_labels(fx, 2 * 18), 4, spatial, 2);
    return grad_check([&] { return dice_loss(p, target); }, {{"probs", p}});
  });
  cases.emplace_back("dice_loss_softmax", [&fx] {
    const Shape spatial{2, 3, 2};
    Tensor logits = fx.random({1, 4, 2, 3, 2}, 2.0f);
    const Tensor target = one_hot(random_labels(fx, 12), 4, spatial);
    return grad_check([&] { return dice_loss(ops::softmax(logits, 1), target); }, {{"logits", logits}});
  });
  return cases;
}

std::vector<Case> model_cases(Fixture& fx, int64_t entries_per_input) {
  std::vector<Case> cases;
  cases.emplace_back("micro_model_16", [&fx, entries_per_input] {
    const SwinVftr model(ModelConfig::micro());
    Tensor x = fx.random({1, 1, 16, 16, 16}, 0.5f);
    for (Scalar& v : x.mutable_data()) v += 0.5f;
    const Tensor target = one_hot(random_labels(fx, 16 * 16 * 16), 4, {16, 16, 16});
    auto inputs = Fixture::params(model.parameters());
    inputs.emplace_back("input", x);
    GradCheckOptions options;
    options.max_entries_per_input = entries_per_input;
    return grad_check([&] { return dice_loss(model.forward(x), target); }, inputs, options);
  });
  return cases;
}

}  // namespace

const std::vector<std::string>& gradcheck_modules() {
  static const std::vector<std::string> names{"ops", "conv", "windowing", "attention", "swin-block",
                                              "va-block", "losses", "model"};
  return names;
}

std::vector<GradCheckCase> run_gradcheck_suite(const std::string& module, uint64_t seed, std::ostream* progress) {
  const auto& names = gradcheck_modules();
  if (module != "all" && std::find(names.begin(), names.end(), module) == names.end()) {
    std::string known;
    for (const auto& n : names) known += " " + n;
    throw ConfigError("unknown gradcheck module '" + module + "'; expected all or one of:" + known);
  }
  Fixture fx(seed);
  std::vector<GradCheckCase> results;
  for (const auto& name : names) {
    if (module != "all" && module != name) continue;
    std::vector<Case> cases;
    if (name == "ops") cases = ops_cases(fx);
    if (name == "conv") cases = conv_cases(fx);
    if (name == "windowing") cases = windowing_cases(fx);
    if (name == "attention") cases = attention_cases(fx);
    if (name == "swin-block") cases = swin_cases(fx);
    if (name == "va-block") cases = va_cases(fx);
    if (name == "losses") cases = loss_cases(fx);
    if (name == "model") cases = model_cases(fx, 3);
    for (auto& [case_name, run] : cases) {
      const auto t0 = std::chrono::steady_clock::now();
      GradCheckCase c{name, case_name, run(), 0.0};
      c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (progress) {
        *progress << (c.report.passed() ? "PASS " : "FAIL ") << name << "/" << case_name
                  << " max_rel=" << c.report.max_rel_error() << " (" << c.seconds << " s)\n";
        if (!c.report.passed()) *progress << c.report.summary();
        progress->flush();
      }
      results.push_back(std::move(c));
    }
  }
  return results;
}

}  // namespace swinvftr
