#include "arm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace arm::tc {

GradCheckResult grad_check(const std::function<Tensor<double>()>& loss_fn,
                           ParameterSet<double>& params, double eps,
                           std::size_t max_per_param) {
  params.zero_grad();
  {
    Tensor<double> loss = loss_fn();
    if (loss.numel() != 1) {
      throw UsageError("grad_check: loss is not scalar " +
                       to_string(loss.shape()));
    }
    loss.backward();
  }
  GradCheckResult result;
  NoGradGuard no_grad;
  for (auto& [name, t] : params) {
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    if (analytic.size() != t.numel()) analytic.assign(t.numel(), 0.0);
    auto w = t.mutable_data();
    const std::size_t stride =
        max_per_param == 0 ? 1 : std::max<std::size_t>(1, w.size() / max_per_param);
    for (std::size_t i = 0; i < w.size(); i += stride) {
      const double orig = w[i];
      w[i] = orig + eps;
      const double fp = loss_fn().item();
      w[i] = orig - eps;
      const double fm = loss_fn().item();
      w[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error || result.checked == 1) {
        result.max_rel_error = rel;
        result.worst_param = name;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace arm::tc
