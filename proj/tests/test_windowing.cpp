#include <map>
#include <set>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "swinvftr/windowing.hpp"
#include "test_util.hpp"

using namespace swinvftr;
using testutil::max_abs_diff;
using testutil::randint;
using testutil::random_tensor;

namespace {

std::vector<double> to_double(const std::vector<Scalar>& v) { return {v.begin(), v.end()}; }

Dims3 random_dims(std::mt19937_64& rng, int64_t lo, int64_t hi) {
  return {randint(rng, lo, hi), randint(rng, lo, hi), randint(rng, lo, hi)};
}

Dims3 slot_coord(const WindowLayout& layout, int64_t window, int64_t t) {
  const Dims3& w = layout.spec.window;
  const Dims3 counts{layout.padded[0] / w[0], layout.padded[1] / w[1], layout.padded[2] / w[2]};
  const int64_t wz = window / (counts[1] * counts[2]), wy = (window / counts[2]) % counts[1], wx = window % counts[2];
  const int64_t tz = t / (w[1] * w[2]), ty = (t / w[2]) % w[1], tx = t % w[2];
  return {wz * w[0] + tz, wy * w[1] + ty, wx * w[2] + tx};
}

}  // namespace

TEST_CASE("token grid round-trips through the volume layout") {
  std::mt19937_64 rng(21);
  Tensor v = random_tensor({2, 3, 2, 3, 4}, rng);
  const TokenGrid g = TokenGrid::from_volume(v);
  CHECK(g.tokens.shape() == Shape{2, 24, 3});
  CHECK(g.tokens.at({1, (1 * 3 + 2) * 4 + 3, 2}) == v.at({1, 2, 1, 2, 3}));
  CHECK(max_abs_diff(g.to_volume().data(), v.data()) == 0.0);
}

TEST_CASE("window partition and reverse are inverse for random grids, windows and shifts") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 60; ++trial) {
    const Dims3 grid = random_dims(rng, 1, 7), window = random_dims(rng, 1, 4);
    Dims3 shift;
    for (int a = 0; a < 3; ++a) shift[a] = randint(rng, 0, window[a] - 1);
    const WindowSpec spec{window, shift};
    const int64_t n = randint(rng, 1, 2), c = randint(rng, 1, 3);
    Tensor t = random_tensor({n, grid[0] * grid[1] * grid[2], c}, rng);
    const Tensor w = window_partition({grid, t}, spec);
    const WindowLayout layout = make_window_layout(grid, spec);
    CHECK(w.shape() == Shape{n * layout.num_windows, layout.window_volume, c});
    CHECK(max_abs_diff(window_reverse(w, grid, spec).tokens.data(), t.data()) == 0.0);
    // Pad slots are zero.
    for (int64_t b = 0; b < n; ++b)
      for (int64_t s = 0; s < layout.num_windows * layout.window_volume; ++s)
        if (layout.pad_flags[s])
          for (int64_t k = 0; k < c; ++k) CHECK(w.data()[(b * layout.num_windows * layout.window_volume + s) * c + k] == 0);
  }
}

TEST_CASE("shifted partition equals a cyclic roll followed by a regular partition") {
  std::mt19937_64 rng(23);
  const Dims3 grid{4, 6, 8}, window{2, 3, 4};
  const WindowSpec spec = WindowSpec::shifted(window);
  Tensor t = random_tensor({1, 4 * 6 * 8, 2}, rng);
  const Tensor direct = window_partition({grid, t}, spec);
  const Tensor rolled = window_partition(cyclic_shift({grid, t}, spec.shift), WindowSpec::regular(window));
  CHECK(max_abs_diff(direct.data(), rolled.data()) == 0.0);
  const TokenGrid back = cyclic_shift(cyclic_shift({grid, t}, {1, 2, 3}), {1, 2, 3}, true);
  CHECK(max_abs_diff(back.tokens.data(), t.data()) == 0.0);
}

TEST_CASE("shift masks agree with the wrap-around oracle") {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 40; ++trial) {
    const Dims3 window = random_dims(rng, 1, 4);
    Dims3 grid = random_dims(rng, 1, 9), shift;
    for (int a = 0; a < 3; ++a) shift[a] = window[a] / 2;
    if (shift == Dims3{0, 0, 0}) shift = {0, 0, 0};
    const WindowSpec spec{window, shift};
    const std::optional<AttentionMask> mask = build_attention_mask(grid, spec);
    const WindowLayout layout = make_window_layout(grid, spec);
    if (!mask) {
      CHECK_FALSE(spec.is_shifted());
      CHECK_FALSE(layout.has_padding());
      continue;
    }
    const int64_t T = layout.window_volume;
    for (int64_t w = 0; w < layout.num_windows; ++w)
      for (int64_t a = 0; a < T; ++a)
        for (int64_t b = 0; b < T; ++b) {
          if (layout.pad_flags[w * T + a] && layout.pad_flags[w * T + b]) continue;
          const bool allowed =
              oracle::shifted_pair_allowed(grid, window, shift, slot_coord(layout, w, a), slot_coord(layout, w, b));
          const Scalar v = mask->values.data()[(w * T + a) * T + b];
          CHECK(v == (allowed ? 0 : kMaskedScore));
        }
  }
}

TEST_CASE("unshifted specs have no shift mask") {
  CHECK_THROWS_AS(build_shift_mask({4, 4, 4}, WindowSpec::regular({2, 2, 2})), ConfigError);
  CHECK_FALSE(build_attention_mask({4, 4, 4}, WindowSpec::regular({2, 2, 2})).has_value());
  CHECK(build_attention_mask({3, 4, 4}, WindowSpec::regular({2, 2, 2})).has_value());
  CHECK_THROWS_AS(make_window_layout({4, 4, 4}, {{2, 2, 2}, {2, 0, 0}}), ConfigError);
}

TEST_CASE("relative position index depends only on the coordinate offset") {
  const Dims3 w{2, 3, 4};
  const std::vector<int64_t> idx = relative_position_index(w);
  const int64_t T = 24;
  std::map<std::array<int64_t, 3>, int64_t> seen;
  std::set<int64_t> values;
  for (int64_t a = 0; a < T; ++a)
    for (int64_t b = 0; b < T; ++b) {
      const std::array<int64_t, 3> off{a / 12 - b / 12, (a / 4) % 3 - (b / 4) % 3, a % 4 - b % 4};
      auto [it, inserted] = seen.emplace(off, idx[a * T + b]);
      CHECK(it->second == idx[a * T + b]);
      values.insert(idx[a * T + b]);
    }
  CHECK(values.size() == seen.size());
  CHECK(static_cast<int64_t>(values.size()) == 3 * 5 * 7);
  CHECK(*values.begin() == 0);
  CHECK(*values.rbegin() == 3 * 5 * 7 - 1);
}

TEST_CASE("attention_core matches dense attention with bias and mask") {
  std::mt19937_64 rng(25);
  const int64_t heads = 2, C = 6, T = 8;
  const AttentionMask mask = build_shift_mask({4, 4, 2}, WindowSpec::shifted({2, 2, 2}));
  const int64_t B = 2 * mask.num_windows;
  Tensor x = random_tensor({B, T, C}, rng);
  // Identity-like projections isolate the attention core.
  std::vector<Scalar> eye3(3 * C * C, 0), eye(C * C, 0);
  for (int64_t i = 0; i < 3 * C; ++i) eye3[i * C + i % C] = 1;
  for (int64_t i = 0; i < C; ++i) eye[i * C + i] = 1;
  Tensor wqkv = Tensor::from_data({3 * C, C}, eye3), bqkv = Tensor::zeros({3 * C});
  Tensor wproj = Tensor::from_data({C, C}, eye), bproj = Tensor::zeros({C});
  Tensor bias = random_tensor({heads, T, T}, rng);
  Tensor qkv = ops::linear(x, wqkv, bqkv);
  std::vector<Scalar> probs;
  const Tensor out = attention_core(qkv, heads, bias, mask.values, &probs);
  const std::vector<double> b64 = to_double({bias.data().begin(), bias.data().end()});
  const std::vector<double> m64 = to_double({mask.values.data().begin(), mask.values.data().end()});
  std::vector<double> ref_probs;
  const std::vector<double> ref =
      oracle::dense_attention(x, wqkv, bqkv, wproj, bproj, heads, &b64, &m64, mask.num_windows, &ref_probs);
  CHECK(max_abs_diff(out.data(), ref) < 1e-5);
  CHECK(max_abs_diff(probs, ref_probs) < 1e-6);
}

TEST_CASE("window attention rejects bad configurations") {
  ParameterStore store;
  CHECK_THROWS_AS(WindowAttention(Scope(store, "a"), 5, 2, {2, 2, 2}, true), ConfigError);
  const WindowAttention attn(Scope(store, "b"), 4, 2, {2, 2, 2}, true);
  CHECK_THROWS_AS(attn.forward(Tensor::zeros({1, 8, 3}), nullptr), ShapeError);
  CHECK(store.find("b.relative_position_bias_table")->tensor.shape() == Shape{27, 2});
}

TEST_CASE("patch partition flattens 2x2x2 patches with channels fastest") {
  std::mt19937_64 rng(26);
  const int64_t cin = 2;
  Tensor v = random_tensor({1, cin, 4, 2, 6}, rng);
  ParameterStore store;
  Linear proj(Scope(store, "p"), 8 * cin, 8 * cin, false);
  // Identity projection exposes the raw patch vectors.
  auto w = proj.weight.mutable_data();
  std::fill(w.begin(), w.end(), 0);
  for (int64_t i = 0; i < 8 * cin; ++i) w[i * 8 * cin + i] = 1;
  const TokenGrid g = patch_partition(v, 2, proj);
  REQUIRE(g.dims == Dims3{2, 1, 3});
  for (int64_t z = 0; z < 2; ++z)
    for (int64_t x = 0; x < 3; ++x) {
      const int64_t token = z * 3 + x;
      int64_t k = 0;
      for (int64_t dz = 0; dz < 2; ++dz)
        for (int64_t dy = 0; dy < 2; ++dy)
          for (int64_t dx = 0; dx < 2; ++dx)
            for (int64_t c = 0; c < cin; ++c, ++k)
              CHECK(g.tokens.at({0, token, k}) == v.at({0, c, 2 * z + dz, dy, 2 * x + dx}));
    }
  CHECK_THROWS_AS(patch_partition(Tensor::zeros({1, cin, 3, 2, 2}), 2, proj), ShapeError);
}

TEST_CASE("patch merging concatenates the 2x2x2 neighbourhood") {
  std::mt19937_64 rng(27);
  const Dims3 d{2, 4, 2};
  Tensor t = random_tensor({1, 16, 3}, rng);
  const TokenGrid m = merge_neighbourhoods({d, t});
  REQUIRE(m.dims == Dims3{1, 2, 1});
  REQUIRE(m.tokens.shape() == Shape{1, 2, 24});
  for (int64_t y = 0; y < 2; ++y) {
    int64_t k = 0;
    for (int64_t dz = 0; dz < 2; ++dz)
      for (int64_t dy = 0; dy < 2; ++dy)
        for (int64_t dx = 0; dx < 2; ++dx)
          for (int64_t c = 0; c < 3; ++c, ++k)
            CHECK(m.tokens.at({0, y, k}) == t.at({0, (dz * 4 + 2 * y + dy) * 2 + dx, c}));
  }
  CHECK_THROWS_AS(merge_neighbourhoods({{3, 4, 2}, Tensor::zeros({1, 24, 3})}), ShapeError);
  CHECK(merge_neighbourhoods({{3, 4, 2}, Tensor::zeros({1, 24, 3})}, true).dims == Dims3{2, 2, 1});

  ParameterStore store;
  const PatchMerging pm(Scope(store, "m"), 3);
  const TokenGrid out = pm({d, t});
  CHECK(out.tokens.shape() == Shape{1, 2, 6});
  CHECK(store.find("m.reduction.bias") == nullptr);
}

TEST_CASE("attention score entries count windows times T^2 times heads") {
  CHECK(attention_score_entries({8, 8, 8}, {4, 4, 4}, 3) == 8 * 64 * 64 * 3);
  // Padding rounds the grid up to whole windows.
  CHECK(attention_score_entries({5, 4, 4}, {4, 4, 4}, 1) == 2 * 64 * 64);
}
