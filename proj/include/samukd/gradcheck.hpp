#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "samukd/tape.hpp"

namespace samukd {

struct NamedParameter {
  std::string name;
  Parameter* param = nullptr;
};

struct GradCheckOptions {
  double step = 1e-5;
  // Denominator floor for the relative error, so components whose true
  // gradient is ~0 are judged against finite-difference noise, not 0/0.
  double floor = 1e-5;
  // Components checked per parameter; 0 checks all of them. When limited,
  // indices are drawn from `seed`.
  std::size_t max_components = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t components = 0;
  std::string worst_name;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  // False if any non-trainable parameter ended backward with a nonzero grad.
  bool frozen_grads_zero = true;

  bool passed(double tolerance = 1e-4) const {
    return frozen_grads_zero && max_rel_error <= tolerance;
  }
};

using LossBuilder = std::function<Var(Tape&)>;

double relative_error(double analytic, double numeric, double floor);

/// Builds the loss on a recording tape, runs backward (filling the grads of
/// trainable parameters, which are zeroed first), then compares each checked
/// component with a central difference evaluated on non-recording tapes.
/// Throws ContractError when the built loss is not a scalar.
GradCheckReport backward_and_check(const LossBuilder& build, std::span<const NamedParameter> params,
                                   const GradCheckOptions& options = {});

}  // namespace samukd
