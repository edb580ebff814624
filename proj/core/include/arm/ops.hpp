#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "arm/tensor.hpp"

namespace arm::tc {

// Differentiable operators. Every op checks operand shapes and raises
// ShapeError on mismatch. Explicitly instantiated for float and double.

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

// a: {m, n}, bias: {1, n}; bias broadcast over rows.
template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& bias);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> relu(const Tensor<T>& a);

// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);

// Row-wise layer normalization with affine gamma/beta of shape {1, n}.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps);

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& x);

// q, k, v: {batch * window, d}. Rows are grouped into `batch` sequences of
// `window` consecutive rows; each sequence attends causally (position i sees
// positions <= i) with `heads` heads of width d / heads.
template <typename T>
Tensor<T> causal_attention(const Tensor<T>& q, const Tensor<T>& k,
                           const Tensor<T>& v, std::size_t batch,
                           std::size_t window, std::size_t heads);

// table: {vocab, d}; returns {ids.size(), d}.
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int64_t> ids);

// Selects rows by index (repeats allowed).
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows);

// Repeats a {w, n} block `times` times vertically.
template <typename T>
Tensor<T> tile_rows(const Tensor<T>& x, std::size_t times);

// Same row-major data viewed with a new shape of equal size.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

// Scalar sum_i x_i * w_i with constant (non-differentiable) weights.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::span<const T> weights);

// Per-row negative log-likelihood of `targets` under softmax(logits).
// A negative target marks an ignored row: zero loss and zero gradient.
template <typename T>
Tensor<T> nll_rows(const Tensor<T>& logits, std::span<const int> targets);

// Per-row focal loss -alpha (1 - p_t)^gamma log(p_t) on probabilities
// p: {N, 1}. p is clamped to [floor, 1 - floor] first; clamped entries pass
// no gradient. Negative targets are ignored rows.
template <typename T>
Tensor<T> focal_rows(const Tensor<T>& p, std::span<const int> targets, T gamma,
                     T alpha, T floor);

// Elementwise map with a caller-supplied derivative. Used to build test
// fixtures (including deliberately wrong derivatives).
template <typename T>
Tensor<T> map_unary(const Tensor<T>& x, std::function<T(T)> f,
                    std::function<T(T)> dfdx);

// Scalar focal loss on a probability in (0, 1); DomainError otherwise.
double focal_loss(double p, int target, double gamma, double alpha);

// Binary cross-entropy -log(p_t).
double binary_cross_entropy(double p, int target);

}  // namespace arm::tc
