#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace vperturb::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  // Smallest observed slack (bound minus measured, or tolerance minus error);
  // negative on failure.
  double margin = 0.0;
  std::string detail;
};

struct SuiteOptions {
  std::uint64_t seed = 0;
  // Configurations per randomized sweep.
  std::size_t sweep = 100;
};

// Runs every oracle check: Gaussian KL against the grid, the smoothing and
// reference-mismatch inequalities, the toy chain, third moments, quadratic
// output sensitivity, accumulated covariance and the predictability sentinel.
std::vector<CheckResult> run_suite(const SuiteOptions& options);

bool all_passed(const std::vector<CheckResult>& results);
nlohmann::ordered_json to_json(const std::vector<CheckResult>& results);

}  // namespace vperturb::verify
