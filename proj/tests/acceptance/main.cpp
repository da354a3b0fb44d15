#include <chrono>
#include <iostream>

#include "CLI11.hpp"
#include "acceptance.hpp"
#include "swinvftr/tensor.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks; one PASS/FAIL line per criterion"};
  int only = 0;
  app.add_option("--criterion", only, "Run a single criterion (1-8)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);
  swinvftr::retain_freed_memory();

  using Check = acceptance::Outcome (*)();
  const std::pair<const char*, Check> criteria[] = {
      {"gradient suite", acceptance::gradient_suite},
      {"shape ladder", acceptance::shape_ladder},
      {"attention oracle", acceptance::attention_oracle},
      {"stitching", acceptance::stitching},
      {"loss/metric oracles", acceptance::loss_metric_oracles},
      {"overfit", acceptance::overfit},
      {"complexity bench", acceptance::complexity_bench},
      {"determinism and serialization", acceptance::determinism_serialization},
  };
  bool all = true;
  for (int i = 0; i < 8; ++i) {
    if (only && only != i + 1) continue;
    const auto t0 = std::chrono::steady_clock::now();
    acceptance::Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << i + 1 << " (" << criteria[i].first << "): " << (o.passed ? "PASS" : "FAIL") << "  "
              << o.detail << "  [" << s << " s]" << std::endl;
    all &= o.passed;
  }
  return all ? 0 : 1;
}
