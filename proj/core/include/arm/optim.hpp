#pragma once

#include <cstdint>
#include <vector>

#include "arm/nn.hpp"

namespace arm::tc {

struct AdamWOptions {
  double lr = 5e-5;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;
};

// Decoupled weight decay: p <- p (1 - lr wd) - lr mhat / (sqrt(vhat) + eps).
class AdamW {
 public:
  AdamW(const ParameterSet<double>& params, AdamWOptions options);

  // Applies one update using each parameter's accumulated grad. `lr`
  // overrides options.lr for this step (schedules).
  void step(ParameterSet<double>& params, double lr);
  void step(ParameterSet<double>& params) { step(params, options_.lr); }

  const OptimizerState& state() const { return state_; }
  const AdamWOptions& options() const { return options_; }

 private:
  AdamWOptions options_;
  OptimizerState state_;
};

// Linear warmup then cosine decay to zero.
double cosine_lr(double base_lr, std::int64_t step, std::int64_t total_steps,
                 std::int64_t warmup_steps);

}  // namespace arm::tc
