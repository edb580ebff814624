#include "arm/nn.hpp"

#include <cmath>

namespace arm::tc {

template <typename T>
Tensor<T>& ParameterSet<T>::add(std::string name, Tensor<T> t) {
  if (contains(name)) {
    throw ConflictError("duplicate parameter name '" + name + "'");
  }
  items_.emplace_back(std::move(name), std::move(t));
  return items_.back().second;
}

template <typename T>
const Tensor<T>& ParameterSet<T>::get(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw NotFoundError("parameter '" + name + "' not found");
}

template <typename T>
bool ParameterSet<T>::contains(const std::string& name) const {
  for (const auto& item : items_) {
    if (item.first == name) return true;
  }
  return false;
}

template <typename T>
std::size_t ParameterSet<T>::numel() const {
  std::size_t n = 0;
  for (const auto& item : items_) n += item.second.numel();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& item : items_) item.second.zero_grad();
}

Tensor<double> Initializer::uniform(Shape shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(shape.numel());
  for (auto& v : data) v = dist(rng_);
  return Tensor<double>::from(shape, std::move(data), true);
}

Tensor<double> Initializer::constant(Shape shape, double value) {
  return Tensor<double>::from(shape, std::vector<double>(shape.numel(), value),
                              true);
}

void init_linear(ParameterSet<double>& params, Initializer& init,
                 const std::string& prefix, std::size_t in, std::size_t out) {
  params.add(prefix + ".weight", init.uniform({in, out}, in));
  params.add(prefix + ".bias", init.uniform({1, out}, in));
}

double clip_grad_norm(ParameterSet<double>& params, double max_norm) {
  double sq = 0.0;
  for (auto& [name, t] : params) {
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& [name, t] : params) {
      for (double& g : t.mutable_grad()) g *= f;
    }
  }
  return norm;
}

template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace arm::tc
