#include "samukd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "samukd/error.hpp"

namespace samukd {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const LossBuilder& build) {
  Tape tape(false);
  Var out = build(tape);
  return out.value()[0];
}

}  // namespace

GradCheckReport backward_and_check(const LossBuilder& build, std::span<const NamedParameter> params,
                                   const GradCheckOptions& options) {
  for (const auto& np : params) np.param->zero_grad();
  {
    Tape tape(true);
    Var out = build(tape);
    if (out.value().size() != 1) {
      throw ContractError("gradient check needs a scalar loss, got " +
                          shape_string(out.value().shape()));
    }
    tape.backward(out);
  }

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (const auto& np : params) {
    Parameter& p = *np.param;
    if (!p.trainable) {
      for (double g : p.grad.values()) {
        if (g != 0.0) report.frozen_grads_zero = false;
      }
      continue;
    }
    std::vector<std::size_t> indices(p.value.size());
    std::iota(indices.begin(), indices.end(), 0);
    if (options.max_components != 0 && indices.size() > options.max_components) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(options.max_components);
    }
    for (std::size_t idx : indices) {
      const double original = p.value[idx];
      p.value[idx] = original + options.step;
      const double up = evaluate(build);
      p.value[idx] = original - options.step;
      const double down = evaluate(build);
      p.value[idx] = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = p.grad[idx];
      const double rel = relative_error(analytic, numeric, options.floor);
      report.max_abs_error = std::max(report.max_abs_error, std::abs(analytic - numeric));
      ++report.components;
      if (rel >= report.max_rel_error || report.worst_name.empty()) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        report.worst_name = np.name;
        report.worst_index = idx;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace samukd
