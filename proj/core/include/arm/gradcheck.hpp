#pragma once

#include <functional>
#include <string>

#include "arm/nn.hpp"

namespace arm::tc {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// Compares the analytic gradient of loss_fn w.r.t. every element of every
// parameter against central differences (f(x+eps) - f(x-eps)) / (2 eps).
// Relative error uses max(|a|, |b|, 1e-8) as denominator. `loss_fn` must
// return a scalar; UsageError otherwise. `max_per_param` > 0 limits the
// number of (evenly strided) elements checked per parameter.
GradCheckResult grad_check(const std::function<Tensor<double>()>& loss_fn,
                           ParameterSet<double>& params, double eps = 1e-5,
                           std::size_t max_per_param = 0);

}  // namespace arm::tc
