#include "menan/optim.hpp"

#include <cmath>

#include "menan/error.hpp"

namespace menan::numerics {

double polynomial_lr(double base, std::size_t step, std::size_t total_steps,
                     double power) {
  if (total_steps == 0) return base;
  if (step >= total_steps) return 0.0;
  double remaining = 1.0 - static_cast<double>(step) /
                               static_cast<double>(total_steps);
  return base * std::pow(remaining, power);
}

void Adam::attach(ParamSet& set) {
  auto params = set.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::size_t n = params[i].tensor.numel();
    slots_.push_back({&set, i, AdamMoments{std::vector<double>(n, 0.0),
                                           std::vector<double>(n, 0.0)}});
  }
}

double Adam::learning_rate(std::size_t schedule_step) const {
  return polynomial_lr(config_.lr, schedule_step, config_.total_steps,
                       config_.decay_power);
}

void Adam::step(std::size_t schedule_step) {
  ++updates_;
  const double lr = learning_rate(schedule_step);
  const double t = static_cast<double>(updates_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (auto& slot : slots_) {
    if (slot.set->frozen()) continue;
    Tensor& param = slot.set->params()[slot.index].tensor;
    if (!param.has_grad()) continue;
    auto values = param.mutable_values();
    auto grad = param.grad();
    auto& m = slot.moments.m;
    auto& v = slot.moments.v;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      if (!std::isfinite(g)) throw NumericError("non-finite gradient");
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

std::vector<std::pair<std::string, const AdamMoments*>> Adam::moments() const {
  std::vector<std::pair<std::string, const AdamMoments*>> out;
  for (const auto& slot : slots_) {
    out.emplace_back(slot.set->params()[slot.index].name, &slot.moments);
  }
  return out;
}

void Adam::restore(const std::string& name, AdamMoments moments) {
  for (auto& slot : slots_) {
    if (slot.set->params()[slot.index].name != name) continue;
    if (moments.m.size() != slot.moments.m.size() ||
        moments.v.size() != slot.moments.v.size()) {
      throw DimensionError("optimizer moments for '" + name +
                           "' have the wrong size");
    }
    slot.moments = std::move(moments);
    return;
  }
  throw UsageError("optimizer has no parameter '" + name + "'");
}

}  // namespace menan::numerics
