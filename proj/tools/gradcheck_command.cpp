#include "gradcheck_command.hpp"

#include <algorithm>
#include <iostream>

#include "swinvftr/gradcheck_suite.hpp"

int run_gradcheck_f64(const std::string& module, uint64_t seed) {
  const auto cases = swinvftr::run_gradcheck_suite(module, seed, &std::cout);
  int failed = 0;
  double worst = 0.0;
  for (const auto& c : cases) {
    failed += !c.report.passed();
    worst = std::max(worst, c.report.max_rel_error());
  }
  std::cout << cases.size() - failed << "/" << cases.size() << " gradient checks passed, max relative error "
            << worst << "\n";
  return failed;
}
