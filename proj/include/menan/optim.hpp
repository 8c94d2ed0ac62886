#pragma once

#include <cstddef>
#include <vector>

#include "menan/params.hpp"

namespace menan::numerics {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Exponent of the polynomial decay; total_steps == 0 disables decay.
  double decay_power = 0.9;
  std::size_t total_steps = 0;
};

/// lr(t) = base * (1 - t/T)^power, clamped at zero for t >= T.
double polynomial_lr(double base, std::size_t step, std::size_t total_steps,
                     double power);

/// Per-parameter first and second moment estimates.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

/// Adam with bias correction over one or more parameter sets.
/// Frozen sets, and parameters that received no gradient, are skipped.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void attach(ParamSet& set);

  /// One update; `schedule_step` selects the decayed learning rate.
  void step(std::size_t schedule_step);

  double learning_rate(std::size_t schedule_step) const;
  std::size_t updates() const { return updates_; }
  const AdamConfig& config() const { return config_; }

  /// Moments in attachment order, one entry per parameter.
  std::vector<std::pair<std::string, const AdamMoments*>> moments() const;
  void restore(const std::string& name, AdamMoments moments);
  void set_updates(std::size_t n) { updates_ = n; }

 private:
  struct Slot {
    ParamSet* set;
    std::size_t index;
    AdamMoments moments;
  };
  AdamConfig config_;
  std::vector<Slot> slots_;
  std::size_t updates_ = 0;
};

}  // namespace menan::numerics
