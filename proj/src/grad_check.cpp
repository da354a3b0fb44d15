#include "swinvftr/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace swinvftr::inline SWINVFTR_PRECISION {

bool GradCheckReport::passed() const {
  return std::all_of(inputs.begin(), inputs.end(), [](const auto& r) { return r.passed; });
}

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& r : inputs) worst = std::max(worst, r.max_rel_error);
  return worst;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  for (const auto& r : inputs) {
    os << (r.passed ? "ok   " : "FAIL ") << r.name << " checked=" << r.checked
       << " max_rel=" << r.max_rel_error << " max_abs=" << r.max_abs_error;
    if (!r.passed) {
      os << " worst[" << r.worst_index << "] analytic=" << r.worst_analytic
         << " numeric=" << r.worst_numeric;
    }
    os << "\n";
  }
  return os.str();
}

GradCheckReport grad_check(const std::function<Tensor()>& f, const std::vector<NamedTensor>& inputs,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  report.rel_tol = options.rel_tol;

  std::vector<Tensor> handles;
  for (const auto& [name, t] : inputs) {
    Tensor h = t;
    h.set_requires_grad(true);
    h.clear_grad();
    handles.push_back(h);
  }
  {
    Tensor y = f();
    y.backward();
  }
  std::vector<std::vector<Scalar>> analytic;
  for (Tensor& h : handles) {
    if (h.has_grad()) {
      analytic.emplace_back(h.grad().begin(), h.grad().end());
    } else {
      analytic.emplace_back(h.numel(), 0.0f);
    }
    h.clear_grad();
  }

  auto eval = [&]() -> double {
    NoGradGuard guard;
    return static_cast<double>(f().item());
  };

  const double floor = options.abs_tol / options.rel_tol;
  std::mt19937_64 rng(options.seed);
  for (size_t k = 0; k < handles.size(); ++k) {
    Tensor& h = handles[k];
    InputGradReport r;
    r.name = inputs[k].first;
    std::vector<int64_t> entries(h.numel());
    std::iota(entries.begin(), entries.end(), 0);
    if (options.max_entries_per_input >= 0 && h.numel() > options.max_entries_per_input) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries_per_input);
      std::sort(entries.begin(), entries.end());
    }
    auto data = h.mutable_data();
    for (int64_t i : entries) {
      const Scalar original = data[i];
      const Scalar plus = static_cast<Scalar>(original + options.step);
      const Scalar minus = static_cast<Scalar>(original - options.step);
      data[i] = plus;
      const double f_plus = eval();
      data[i] = minus;
      const double f_minus = eval();
      data[i] = original;
      const double numeric =
          (f_plus - f_minus) / (static_cast<double>(plus) - static_cast<double>(minus));
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double rel_err = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
      ++r.checked;
      r.max_abs_error = std::max(r.max_abs_error, abs_err);
      if (rel_err > r.max_rel_error || r.worst_index < 0) {
        r.max_rel_error = std::max(r.max_rel_error, rel_err);
        r.worst_index = i;
        r.worst_analytic = a;
        r.worst_numeric = numeric;
      }
    }
    r.passed = r.max_rel_error < options.rel_tol;
    report.inputs.push_back(std::move(r));
  }
  return report;
}

}  // namespace swinvftr
