#pragma once

#include <cstddef>
#include <vector>

#include "samukd/gradcheck.hpp"
#include "samukd/tape.hpp"

namespace samukd {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct AdamSlot {
  Tensor m;
  Tensor v;
  std::size_t t = 0;
};

// One bias-corrected Adam update of `p` from its current grad. Frozen
// parameters are left untouched (their slot does not advance either).
void adam_step(Parameter& p, AdamSlot& slot, double lr, const AdamConfig& cfg);

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<NamedParameter> params, AdamConfig cfg = {});

  void zero_grad();
  void step(double lr);
  std::size_t steps() const noexcept { return steps_; }

 private:
  std::vector<NamedParameter> params_;
  std::vector<AdamSlot> slots_;
  AdamConfig cfg_;
  std::size_t steps_ = 0;
};

/// Three-phase schedule: linear 0 -> peak over the first warmup_frac·total
/// iterations, constant through (warmup_frac + const_frac)·total, then linear
/// decay to 0 at `total`. Throws RangeError for iter > total.
double three_phase_lr(std::size_t iter, std::size_t total, double peak, double warmup_frac,
                      double const_frac);

// Collects (name, parameter) pairs from a visit-style traversal.
template <typename Visitable>
std::vector<NamedParameter> collect_parameters(Visitable& module, const std::string& prefix) {
  std::vector<NamedParameter> out;
  module.visit(prefix, [&out](const std::string& name, Parameter& p) { out.push_back({name, &p}); });
  return out;
}

}  // namespace samukd
