#include "swinvftr/model.hpp"

#include <sstream>

namespace swinvftr::inline SWINVFTR_PRECISION {

namespace {

const char* mrf_mode_name(MrfMode m) { return m == MrfMode::Sequence1d ? "sequence" : "spatial"; }

MrfMode parse_mrf_mode(const std::string& v) {
  if (v == "sequence") return MrfMode::Sequence1d;
  if (v == "spatial") return MrfMode::Spatial3d;
  throw ConfigError("key 'mrf_mode': expected sequence|spatial, got '" + v + "'");
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (in_channels < 1) fail("in_channels must be >= 1");
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (embed_dim < 2 || embed_dim % 2 != 0) fail("embed_dim must be even and >= 2");
  if (patch_size < 1) fail("patch_size must be >= 1");
  if (stages < 1) fail("stages must be >= 1");
  if (depth < 2 || depth % 2 != 0) fail("depth must be a positive even number");
  if (static_cast<int64_t>(heads.size()) != stages + 1) {
    fail("heads needs stages + 1 = " + std::to_string(stages + 1) + " entries");
  }
  for (int64_t s = 0; s <= stages; ++s) {
    const int64_t c = embed_dim << s;
    if (heads[s] < 1 || c % heads[s] != 0) {
      fail("stage " + std::to_string(s) + " channels " + std::to_string(c) + " not divisible by heads " +
           std::to_string(heads[s]));
    }
  }
  WindowSpec::regular(window).validate();
  if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
}

int64_t ModelConfig::downsampling() const { return patch_size << stages; }

KeyValues ModelConfig::to_key_values(bool include_seed) const {
  KeyValues kv;
  kv["in_channels"] = std::to_string(in_channels);
  kv["num_classes"] = std::to_string(num_classes);
  kv["embed_dim"] = std::to_string(embed_dim);
  kv["patch_size"] = std::to_string(patch_size);
  kv["stages"] = std::to_string(stages);
  kv["depth"] = std::to_string(depth);
  kv["heads"] = kv::from_list(heads);
  kv["window"] = kv::from_dims3(window);
  kv["use_va"] = kv::from_bool(use_va);
  kv["use_mrf"] = kv::from_bool(use_mrf);
  kv["full_resolution"] = kv::from_bool(full_resolution);
  kv["relative_bias"] = kv::from_bool(relative_bias);
  kv["mrf_mode"] = mrf_mode_name(mrf_mode);
  kv["mlp_ratio"] = std::to_string(mlp_ratio);
  if (include_seed) kv["seed"] = std::to_string(seed);
  return kv;
}

ModelConfig ModelConfig::from_key_values(KeyValues& kv) {
  ModelConfig c;
  auto take = [&](const char* key, auto&& apply) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    apply(it->first, it->second);
    kv.erase(it);
  };
  take("in_channels", [&](auto& k, auto& v) { c.in_channels = kv::to_int(k, v); });
  take("num_classes", [&](auto& k, auto& v) { c.num_classes = kv::to_int(k, v); });
  take("embed_dim", [&](auto& k, auto& v) { c.embed_dim = kv::to_int(k, v); });
  take("patch_size", [&](auto& k, auto& v) { c.patch_size = kv::to_int(k, v); });
  take("stages", [&](auto& k, auto& v) { c.stages = kv::to_int(k, v); });
  take("depth", [&](auto& k, auto& v) { c.depth = kv::to_int(k, v); });
  take("heads", [&](auto& k, auto& v) { c.heads = kv::to_int_list(k, v); });
  take("window", [&](auto& k, auto& v) { c.window = kv::to_dims3(k, v); });
  take("use_va", [&](auto& k, auto& v) { c.use_va = kv::to_bool(k, v); });
  take("use_mrf", [&](auto& k, auto& v) { c.use_mrf = kv::to_bool(k, v); });
  take("full_resolution", [&](auto& k, auto& v) { c.full_resolution = kv::to_bool(k, v); });
  take("relative_bias", [&](auto& k, auto& v) { c.relative_bias = kv::to_bool(k, v); });
  take("mrf_mode", [&](auto&, auto& v) { c.mrf_mode = parse_mrf_mode(v); });
  take("mlp_ratio", [&](auto& k, auto& v) { c.mlp_ratio = kv::to_int(k, v); });
  take("seed", [&](auto& k, auto& v) { c.seed = kv::to_uint(k, v); });
  return c;
}

bool ModelConfig::compatible_with(const ModelConfig& other) const {
  return to_key_values(false) == other.to_key_values(false);
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::micro() {
  ModelConfig c;
  c.embed_dim = 8;
  c.heads = {1, 2, 4, 8};
  c.window = {2, 2, 2};
  return c;
}

ResidualConvBlock::ResidualConvBlock(const Scope& scope, int64_t cin, int64_t cout) : has_projection(cin != cout) {
  conv_a = Conv3d(scope.sub("conv1"), cin, cout, {3, 3, 3}, same_padding(3), false);
  norm_a = InstanceNorm(scope.sub("norm1"), cout);
  conv_b = Conv3d(scope.sub("conv2"), cout, cout, {3, 3, 3}, same_padding(3), false);
  norm_b = InstanceNorm(scope.sub("norm2"), cout);
  if (has_projection) {
    projection = Conv3d(scope.sub("conv3"), cin, cout, {1, 1, 1}, {}, false);
    norm_proj = InstanceNorm(scope.sub("norm3"), cout);
  }
}

Tensor ResidualConvBlock::forward(const Tensor& x) const {
  Tensor h = ops::gelu(norm_a(conv_a(x)));
  h = norm_b(conv_b(h));
  Tensor shortcut = has_projection ? norm_proj(projection(x)) : x;
  return ops::gelu(ops::add(h, shortcut));
}

SkipBlock::SkipBlock(const Scope& scope, int64_t channels, bool use_va_) : use_va(use_va_) {
  if (use_va) {
    va = VaBlock(scope.sub("va"), channels);
  } else {
    residual = ResidualConvBlock(scope.sub("res"), channels, channels);
  }
}

SwinVftr::SwinVftr(ModelConfig config) : config_(std::move(config)), store_(std::make_unique<ParameterStore>()) {
  config_.validate();
  const ModelConfig& c = config_;
  Scope root(*store_);
  const int64_t p = c.patch_size;
  patch_embed_ = Linear(root.sub("encoder.patch_embed"), c.in_channels * p * p * p, c.embed_dim);

  for (int64_t s = 0; s <= c.stages; ++s) {
    const int64_t ch = c.embed_dim << s;
    SwinBlockOptions opts;
    opts.channels = ch;
    opts.heads = c.heads[s];
    opts.window = c.window;
    opts.use_mrf = c.use_mrf;
    opts.mrf_mode = c.mrf_mode;
    opts.mlp_ratio = c.mlp_ratio;
    opts.relative_bias = c.relative_bias;
    const std::string name = s < c.stages ? "encoder.stage" + std::to_string(s + 1) : "encoder.bottleneck";
    for (int64_t pair = 0; pair < c.depth / 2; ++pair) {
      stage_blocks_.emplace_back(root.sub(name + ".pair" + std::to_string(pair)), opts);
    }
    if (s < c.stages) merges_.emplace_back(root.sub(name + ".merge"), ch);
  }

  const int64_t half = c.embed_dim / 2;
  if (c.full_resolution) raw_block_ = ResidualConvBlock(root.sub("encoder.raw"), c.in_channels, half);
  const int64_t top = c.embed_dim << c.stages;
  bottleneck_block_ = ResidualConvBlock(root.sub("decoder.bottleneck"), top, top);
  for (int64_t s = c.stages - 1; s >= 0; --s) {
    const int64_t ch = c.embed_dim << s;
    const std::string name = "decoder.stage" + std::to_string(s + 1);
    upsamples_.emplace_back(root.sub(name + ".up"), 2 * ch, ch);
    skip_blocks_.emplace_back(root.sub(name + ".skip"), ch, c.use_va);
    decoder_blocks_.emplace_back(root.sub(name + ".block"), 2 * ch, ch);
  }
  final_upsample_ = ConvTranspose3d(root.sub("decoder.full.up"), c.embed_dim, half);
  if (c.full_resolution) {
    raw_skip_ = SkipBlock(root.sub("decoder.full.skip"), half, c.use_va);
    final_block_ = ResidualConvBlock(root.sub("decoder.full.block"), 2 * half, half);
  }
  head_ = Conv3d(root.sub("head"), half, c.num_classes, {1, 1, 1});
  store_->initialize(c.seed);
}

namespace {

/// Non-affine LayerNorm over channels, applied to encoder outputs before they leave the encoder.
Tensor normalized_volume(const TokenGrid& grid) {
  const int64_t c = grid.channels();
  return TokenGrid{grid.dims, ops::layer_norm(grid.tokens, Tensor::full({c}, 1), Tensor::zeros({c}))}.to_volume();
}

}  // namespace

std::vector<Dims3> SwinVftr::stage_dims(Dims3 input) const {
  std::vector<Dims3> out;
  Dims3 d{input[0] / config_.patch_size, input[1] / config_.patch_size, input[2] / config_.patch_size};
  out.push_back(d);
  for (int64_t s = 0; s < config_.stages; ++s) {
    d = {d[0] / 2, d[1] / 2, d[2] / 2};
    out.push_back(d);
  }
  return out;
}

FeaturePyramid SwinVftr::encode(const Tensor& volume) const {
  const ModelConfig& c = config_;
  if (volume.rank() != 5 || volume.dim(1) != c.in_channels) {
    throw ShapeError("encode: expected [N," + std::to_string(c.in_channels) + ",D,H,W], got " +
                     shape_str(volume.shape()));
  }
  const int64_t factor = c.downsampling();
  for (int a = 2; a < 5; ++a) {
    if (volume.dim(a) % factor != 0) {
      throw ShapeError("encode: input " + shape_str(volume.shape()) + " spatial dims must be divisible by " +
                       std::to_string(factor));
    }
  }
  FeaturePyramid out;
  if (c.full_resolution) out.raw = raw_block_.forward(volume);
  TokenGrid grid = patch_partition(volume, c.patch_size, patch_embed_);
  const int64_t pairs = c.depth / 2;
  for (int64_t s = 0; s <= c.stages; ++s) {
    for (int64_t p = 0; p < pairs; ++p) grid = stage_blocks_[s * pairs + p].forward(grid);
    if (s < c.stages) {
      out.skips.push_back(normalized_volume(grid));
      grid = merges_[s](grid);
    }
  }
  out.bottleneck = normalized_volume(grid);
  return out;
}

Tensor SwinVftr::decode_logits(const FeaturePyramid& pyramid, std::vector<Shape>* stage_shapes) const {
  const ModelConfig& c = config_;
  if (static_cast<int64_t>(pyramid.skips.size()) != c.stages || !pyramid.bottleneck.defined() ||
      pyramid.bottleneck.dim(1) != (c.embed_dim << c.stages) || (c.full_resolution && !pyramid.raw.defined())) {
    throw ConfigError("decode: feature pyramid does not match model config (stages=" + std::to_string(c.stages) +
                      ", embed_dim=" + std::to_string(c.embed_dim) + ")");
  }
  for (int64_t s = 0; s < c.stages; ++s) {
    if (pyramid.skips[s].dim(1) != (c.embed_dim << s)) {
      throw ConfigError("decode: skip " + std::to_string(s) + " has " + std::to_string(pyramid.skips[s].dim(1)) +
                        " channels, expected " + std::to_string(c.embed_dim << s));
    }
  }
  auto record = [&](const Tensor& t) {
    if (stage_shapes) stage_shapes->push_back(t.shape());
  };
  Tensor x = bottleneck_block_.forward(pyramid.bottleneck);
  record(x);
  for (int64_t i = 0; i < c.stages; ++i) {
    const int64_t s = c.stages - 1 - i;
    Tensor up = upsamples_[i](x);
    Tensor skip = skip_blocks_[i].forward(pyramid.skips[s]);
    x = decoder_blocks_[i].forward(ops::concat({up, skip}, 1));
    record(x);
  }
  x = final_upsample_(x);
  if (c.full_resolution) {
    Tensor skip = raw_skip_.forward(pyramid.raw);
    x = final_block_.forward(ops::concat({x, skip}, 1));
  }
  record(x);
  return head_(x);
}

Tensor SwinVftr::decode(const FeaturePyramid& pyramid) const { return ops::softmax(decode_logits(pyramid), 1); }

}  // namespace swinvftr
