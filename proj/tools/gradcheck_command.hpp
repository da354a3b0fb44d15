#pragma once

#include <cstdint>
#include <string>

/// Runs the f64 gradient suite, printing one line per case. Returns the number of failures.
int run_gradcheck_f64(const std::string& module, uint64_t seed);
