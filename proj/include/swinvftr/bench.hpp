#pragma once

#include <string>
#include <vector>

#include "swinvftr/model.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

/// Weights of a convolution over X kernel taps: X * Cin * Cout.
inline int64_t conv_weight_count(int64_t kernel_volume, int64_t cin, int64_t cout) {
  return kernel_volume * cin * cout;
}

/// Linear(C -> rC) + Linear(rC -> C) with biases.
int64_t mlp_param_count(int64_t channels, int64_t ratio);
/// conv1 + depthwise + dilated + fuse, each with bias.
int64_t mrf_param_count(int64_t channels, MrfMode mode);

/// Score-matrix entries of global self-attention over `grid`: L^2 * heads.
int64_t global_attention_entries(Dims3 grid, int64_t heads);

struct StageBench {
  int64_t stage = 0;
  int64_t channels = 0;
  int64_t mlp_params = 0;
  int64_t mrf_params = 0;
};

struct AttentionBench {
  Dims3 grid{0, 0, 0};
  int64_t tokens = 0;
  int64_t windowed_entries = 0;
  int64_t global_entries = 0;
};

struct BenchReport {
  ModelConfig config;
  int64_t params_mrf_model = 0;
  int64_t params_mlp_model = 0;
  std::vector<StageBench> stages;
  std::vector<AttentionBench> attention;
  Dims3 timed_input{0, 0, 0};
  double forward_seconds = 0.0;  // 0 when not timed

  std::string to_text() const;
};

/// Token grids used when none are given: a base grid at four windows per axis,
/// then the depth and the height doubled.
std::vector<Dims3> default_bench_grids(Dims3 window);

/// Counts parameters of the MRF and MLP variants of `config` and attention
/// score entries (first-stage heads) over `grids`. A non-zero `timed_input`
/// (D, H, W) also times one inference forward pass.
BenchReport run_bench(const ModelConfig& config, std::vector<Dims3> grids = {}, Dims3 timed_input = {0, 0, 0});

}  // namespace swinvftr
