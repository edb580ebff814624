#include "arm/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace arm::tc {

AdamW::AdamW(const ParameterSet<double>& params, AdamWOptions options)
    : options_(options) {
  for (const auto& [name, t] : params) {
    state_.m.emplace_back(t.numel(), 0.0);
    state_.v.emplace_back(t.numel(), 0.0);
  }
}

void AdamW::step(ParameterSet<double>& params, double lr) {
  if (params.size() != state_.m.size()) {
    throw ShapeError("AdamW: parameter set changed since construction");
  }
  ++state_.step;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.step));
  std::size_t idx = 0;
  for (auto& [name, t] : params) {
    auto& m = state_.m[idx];
    auto& v = state_.v[idx];
    ++idx;
    if (m.size() != t.numel()) {
      throw ShapeError("AdamW: moment buffer mismatch for '" + name + "'");
    }
    auto w = t.mutable_data();
    auto g = t.grad();
    const bool has_grad = g.size() == w.size();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = has_grad ? g[i] : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] *= 1.0 - lr * options_.weight_decay;
      w[i] -= lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

double cosine_lr(double base_lr, std::int64_t step, std::int64_t total_steps,
                 std::int64_t warmup_steps) {
  if (warmup_steps > 0 && step < warmup_steps) {
    return base_lr * static_cast<double>(step + 1) /
           static_cast<double>(warmup_steps);
  }
  const std::int64_t span = std::max<std::int64_t>(1, total_steps - warmup_steps);
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup_steps) /
                        static_cast<double>(span));
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace arm::tc
