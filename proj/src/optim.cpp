#include "samukd/optim.hpp"

#include <cmath>
#include <string>

#include "samukd/error.hpp"

namespace samukd {

void AdamConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be positive");
}

void adam_step(Parameter& p, AdamSlot& slot, double lr, const AdamConfig& cfg) {
  if (!p.trainable) return;
  if (slot.m.empty()) {
    slot.m = Tensor(p.value.shape(), 0.0);
    slot.v = Tensor(p.value.shape(), 0.0);
  }
  ++slot.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(slot.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(slot.t));
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double g = p.grad[i];
    slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * g;
    slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = slot.m[i] / c1;
    const double vhat = slot.v[i] / c2;
    p.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

AdamOptimizer::AdamOptimizer(std::vector<NamedParameter> params, AdamConfig cfg)
    : params_(std::move(params)), slots_(params_.size()), cfg_(cfg) {
  cfg_.validate();
}

void AdamOptimizer::zero_grad() {
  for (auto& np : params_) np.param->zero_grad();
}

void AdamOptimizer::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) adam_step(*params_[i].param, slots_[i], lr, cfg_);
  ++steps_;
}

double three_phase_lr(std::size_t iter, std::size_t total, double peak, double warmup_frac,
                      double const_frac) {
  if (iter > total) {
    throw RangeError("lr schedule: iteration " + std::to_string(iter) + " beyond total " +
                     std::to_string(total));
  }
  if (warmup_frac < 0.0 || const_frac < 0.0 || warmup_frac + const_frac > 1.0) {
    throw ConfigError("lr schedule: need warmup_frac, const_frac >= 0 and their sum <= 1");
  }
  const double n = static_cast<double>(total);
  const double x = static_cast<double>(iter);
  const double warm_end = warmup_frac * n;
  const double const_end = (warmup_frac + const_frac) * n;
  if (x <= warm_end) return warm_end > 0.0 ? peak * x / warm_end : peak;
  if (x <= const_end) return peak;
  const double span = n - const_end;
  return span > 0.0 ? peak * (n - x) / span : 0.0;
}

}  // namespace samukd
