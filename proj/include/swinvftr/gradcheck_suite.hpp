#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "swinvftr/grad_check.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

struct GradCheckCase {
  std::string module;
  std::string name;
  GradCheckReport report;
  double seconds = 0.0;
};

/// Names accepted by run_gradcheck_suite besides "all".
const std::vector<std::string>& gradcheck_modules();

/// Finite-difference checks of every differentiable op and module, grouped by
/// module. "model" runs the micro configuration on a 16^3 input with sampled
/// entries per parameter tensor. Throws ConfigError for an unknown module.
std::vector<GradCheckCase> run_gradcheck_suite(const std::string& module = "all", uint64_t seed = 0,
                                               std::ostream* progress = nullptr);

}  // namespace swinvftr
