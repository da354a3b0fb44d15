#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "swinvftr/tensor.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

struct GradCheckOptions {
  double rel_tol = 1e-2;
  double abs_tol = 1e-4;
  double step = 1e-3;
  /// Entries probed per input; inputs larger than this are sampled uniformly
  /// without replacement. Negative means every entry.
  int64_t max_entries_per_input = -1;
  uint64_t seed = 0;
};

struct InputGradReport {
  std::string name;
  int64_t checked = 0;
  /// |analytic - numeric| / max(|analytic|, |numeric|, abs_tol / rel_tol).
  /// This is below rel_tol exactly when the entry is within rel_tol relatively
  /// or within abs_tol absolutely.
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<InputGradReport> inputs;
  double rel_tol = 0.0;

  bool passed() const;
  double max_rel_error() const;
  std::string summary() const;
};

using NamedTensor = std::pair<std::string, Tensor>;

/// Compares reverse-mode gradients of the scalar `f` with central differences
/// w.r.t. every named input. `f` must read the inputs by handle, since
/// probes perturb their storage in place. Differences and quotients are
/// formed in double precision using the actually representable perturbed
/// values. Failures are reported, never thrown.
GradCheckReport grad_check(const std::function<Tensor()>& f, const std::vector<NamedTensor>& inputs,
                           const GradCheckOptions& options = {});

}  // namespace swinvftr
