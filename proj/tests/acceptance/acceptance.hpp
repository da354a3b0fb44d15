#pragma once

#include <string>

namespace acceptance {

struct Outcome {
  bool passed = false;
  std::string detail;
};

Outcome gradient_suite();
Outcome shape_ladder();
Outcome attention_oracle();
Outcome stitching();
Outcome loss_metric_oracles();
Outcome overfit();
Outcome complexity_bench();
Outcome determinism_serialization();

}  // namespace acceptance
