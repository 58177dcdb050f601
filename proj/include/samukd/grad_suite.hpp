#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace samukd {

struct GradSuiteEntry {
  std::string name;
  std::size_t cases = 0;
  std::size_t components = 0;
  double max_rel_error = 0.0;
  // Parameter and case of the largest error.
  std::string worst_parameter;
  std::size_t worst_case = 0;
  bool passed = true;
};

struct GradSuiteReport {
  std::vector<GradSuiteEntry> entries;
  double max_rel_error = 0.0;
  bool passed = true;
};

// Names of every check in the suite: each differentiable primitive, the CTC
// loss, the distillation loss, the encoder+pooling distillation objective and
// the full encoder-decoder NLL.
std::vector<std::string> gradient_check_names();

/// Runs every check on `cases` seeded random instances (shapes vary per case)
/// and compares analytic against central-difference gradients.
GradSuiteReport run_gradient_suite(std::size_t cases = 100, std::uint64_t seed = 0,
                                   double tolerance = 1e-4);

}  // namespace samukd
