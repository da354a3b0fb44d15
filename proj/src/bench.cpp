#include "swinvftr/bench.hpp"

#include <chrono>
#include <iomanip>
#include <sstream>

namespace swinvftr::inline SWINVFTR_PRECISION {

int64_t mlp_param_count(int64_t channels, int64_t ratio) {
  const int64_t hidden = channels * ratio;
  return (channels * hidden + hidden) + (hidden * channels + channels);
}

int64_t mrf_param_count(int64_t channels, MrfMode mode) {
  const int64_t dilated_taps = mode == MrfMode::Sequence1d ? 3 : 27;
  const int64_t c = channels;
  const int64_t conv1 = conv_weight_count(1, c, c) + c;
  const int64_t depthwise = conv_weight_count(1, 1, c) + c;
  const int64_t dilated = conv_weight_count(dilated_taps, c, c) + c;
  const int64_t fuse = conv_weight_count(1, c, c) + c;
  return conv1 + depthwise + dilated + fuse;
}

int64_t global_attention_entries(Dims3 grid, int64_t heads) {
  const int64_t tokens = grid[0] * grid[1] * grid[2];
  return tokens * tokens * heads;
}

std::vector<Dims3> default_bench_grids(Dims3 window) {
  const Dims3 base{4 * window[0], 4 * window[1], 4 * window[2]};
  return {base, {2 * base[0], base[1], base[2]}, {2 * base[0], 2 * base[1], base[2]}};
}

BenchReport run_bench(const ModelConfig& config, std::vector<Dims3> grids, Dims3 timed_input) {
  config.validate();
  BenchReport r;
  r.config = config;
  ModelConfig with_mrf = config, with_mlp = config;
  with_mrf.use_mrf = true;
  with_mlp.use_mrf = false;
  const SwinVftr mrf_model(with_mrf);
  r.params_mrf_model = mrf_model.parameters().scalar_count();
  r.params_mlp_model = SwinVftr(with_mlp).parameters().scalar_count();
  for (int64_t s = 0; s <= config.stages; ++s) {
    const int64_t c = config.embed_dim << s;
    r.stages.push_back({s + 1, c, mlp_param_count(c, config.mlp_ratio), mrf_param_count(c, config.mrf_mode)});
  }
  if (grids.empty()) grids = default_bench_grids(config.window);
  const int64_t heads = config.heads.front();
  for (const Dims3& g : grids) {
    r.attention.push_back({g, g[0] * g[1] * g[2], attention_score_entries(g, config.window, heads),
                           global_attention_entries(g, heads)});
  }
  if (timed_input[0] > 0) {
    r.timed_input = timed_input;
    const Tensor x = Tensor::full({1, config.in_channels, timed_input[0], timed_input[1], timed_input[2]}, 0.5f);
    NoGradGuard no_grad;
    const auto t0 = std::chrono::steady_clock::now();
    (void)mrf_model.forward(x);
    r.forward_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return r;
}

std::string BenchReport::to_text() const {
  std::ostringstream os;
  os << "parameters (use_mrf=true):  " << params_mrf_model << "\n";
  os << "parameters (use_mrf=false): " << params_mlp_model << "\n\n";
  os << "per sub-block feed-forward parameters (X*Cin*Cout weights + biases)\n";
  os << std::setw(6) << "stage" << std::setw(10) << "C" << std::setw(14) << "mlp" << std::setw(14) << "mrf"
     << "\n";
  for (const auto& s : stages) {
    os << std::setw(6) << s.stage << std::setw(10) << s.channels << std::setw(14) << s.mlp_params
       << std::setw(14) << s.mrf_params << "\n";
  }
  os << "\nattention score entries (heads=" << config.heads.front() << ", window " << dims_str(config.window)
     << ")\n";
  os << std::setw(16) << "grid" << std::setw(10) << "tokens" << std::setw(16) << "windowed" << std::setw(18)
     << "global" << "\n";
  for (const auto& a : attention) {
    os << std::setw(16) << dims_str(a.grid) << std::setw(10) << a.tokens << std::setw(16) << a.windowed_entries
       << std::setw(18) << a.global_entries << "\n";
  }
  for (size_t i = 1; i < attention.size(); ++i) {
    const auto& p = attention[i - 1];
    const auto& a = attention[i];
    os << "tokens x" << static_cast<double>(a.tokens) / p.tokens << ": windowed x"
       << static_cast<double>(a.windowed_entries) / p.windowed_entries << ", global x"
       << static_cast<double>(a.global_entries) / p.global_entries << "\n";
  }
  if (forward_seconds > 0.0) {
    os << "\nforward pass " << dims_str(timed_input) << ": " << std::fixed << std::setprecision(3)
       << forward_seconds << " s\n";
  }
  return os.str();
}

}  // namespace swinvftr
