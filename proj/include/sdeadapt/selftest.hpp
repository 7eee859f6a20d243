#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sdeadapt {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast invariant checks (seconds): path caching and additivity, step law,
/// backstop flags, degeneration to the fixed-step truncated update, truncation
/// and step bounds, the linear implicit step, and bitwise reproducibility.
std::vector<CheckResult> run_selftest(std::uint64_t seed = 42);

}  // namespace sdeadapt
