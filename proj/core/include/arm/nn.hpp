#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "arm/ops.hpp"
#include "arm/tensor.hpp"

namespace arm::tc {

// Ordered, named parameter collection. Order is insertion order and is the
// order used by the optimizer and the checkpoint writer.
template <typename T>
class ParameterSet {
 public:
  Tensor<T>& add(std::string name, Tensor<T> t);
  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return items_.size(); }
  std::size_t numel() const;
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }

  void zero_grad();

  template <typename U>
  ParameterSet<U> cast_to() const {
    ParameterSet<U> out;
    for (const auto& [name, t] : items_) out.add(name, tc::cast<U>(t));
    return out;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
};

// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initializer.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  Tensor<double> uniform(Shape shape, std::size_t fan_in);
  Tensor<double> constant(Shape shape, double value);

 private:
  std::mt19937_64 rng_;
};

template <typename T>
struct Linear {
  Tensor<T> weight;  // {in, out}
  Tensor<T> bias;    // {1, out}

  Tensor<T> operator()(const Tensor<T>& x) const {
    return add_row(matmul(x, weight), bias);
  }
};

// Registers "<prefix>.weight" / "<prefix>.bias".
void init_linear(ParameterSet<double>& params, Initializer& init,
                 const std::string& prefix, std::size_t in, std::size_t out);

template <typename T>
Linear<T> bind_linear(const ParameterSet<T>& params, const std::string& prefix) {
  return {params.get(prefix + ".weight"), params.get(prefix + ".bias")};
}

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(ParameterSet<double>& params, double max_norm);

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

}  // namespace arm::tc
