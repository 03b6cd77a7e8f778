#pragma once

// Finite-difference suite over every forward op and the end-to-end losses.

#include <cstdint>
#include <string>
#include <vector>

namespace vpr {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Random inputs in [-1, 1] drawn from `seed`; each check passes when its
// error is below `tolerance`.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, double tolerance = 1e-4,
                                                 double epsilon = 1e-5);

}  // namespace vpr
