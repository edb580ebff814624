#include "arm/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace arm::tc {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;
template <typename T>
using MapM = Eigen::Map<RowMat<T>>;

template <typename T>
MapC<T> view(const std::vector<T>& v, Shape s) {
  return MapC<T>(v.data(), static_cast<Eigen::Index>(s.rows),
                 static_cast<Eigen::Index>(s.cols));
}
template <typename T>
MapM<T> view_mut(std::vector<T>& v, Shape s) {
  return MapM<T>(v.data(), static_cast<Eigen::Index>(s.rows),
                 static_cast<Eigen::Index>(s.cols));
}

template <typename T>
Node<T>& parent(Node<T>& n, std::size_t i) {
  return *n.parents[i];
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) +
                     " vs " + to_string(b));
  }
}

template <typename T>
void require_targets(std::size_t rows, std::span<const int> targets,
                     const char* op) {
  if (targets.size() != rows) {
    throw ShapeError(std::string(op) + ": " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(rows) + " rows");
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  Shape out{a.rows(), b.cols()};
  std::vector<T> value(out.numel());
  view_mut(value, out).noalias() =
      view(a.node()->value, a.shape()) * view(b.node()->value, b.shape());
  return make_result<T>(out, std::move(value), {a, b}, [](Node<T>& n) {
    auto& pa = parent(n, 0);
    auto& pb = parent(n, 1);
    auto g = view(n.grad, n.shape);
    if (pa.requires_grad) {
      view_mut(pa.grad, pa.shape).noalias() +=
          g * view(pb.value, pb.shape).transpose();
    }
    if (pb.requires_grad) {
      view_mut(pb.grad, pb.shape).noalias() +=
          view(pa.value, pa.shape).transpose() * g;
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "add");
  std::vector<T> value(a.numel());
  for (std::size_t i = 0; i < value.size(); ++i) {
    value[i] = a.data()[i] + b.data()[i];
  }
  return make_result<T>(a.shape(), std::move(value), {a, b}, [](Node<T>& n) {
    for (std::size_t p = 0; p < 2; ++p) {
      auto& pn = parent(n, p);
      if (!pn.requires_grad) continue;
      for (std::size_t i = 0; i < n.grad.size(); ++i) pn.grad[i] += n.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "sub");
  std::vector<T> value(a.numel());
  for (std::size_t i = 0; i < value.size(); ++i) {
    value[i] = a.data()[i] - b.data()[i];
  }
  return make_result<T>(a.shape(), std::move(value), {a, b}, [](Node<T>& n) {
    auto& pa = parent(n, 0);
    auto& pb = parent(n, 1);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += n.grad[i];
      if (pb.requires_grad) pb.grad[i] -= n.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "mul");
  std::vector<T> value(a.numel());
  for (std::size_t i = 0; i < value.size(); ++i) {
    value[i] = a.data()[i] * b.data()[i];
  }
  return make_result<T>(a.shape(), std::move(value), {a, b}, [](Node<T>& n) {
    auto& pa = parent(n, 0);
    auto& pb = parent(n, 1);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += n.grad[i] * pb.value[i];
      if (pb.requires_grad) pb.grad[i] += n.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeError("add_row: bias " + to_string(bias.shape()) +
                     " for input " + to_string(a.shape()));
  }
  const std::size_t m = a.rows();
  const std::size_t c = a.cols();
  std::vector<T> value(a.numel());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      value[r * c + j] = a.data()[r * c + j] + bias.data()[j];
    }
  }
  return make_result<T>(a.shape(), std::move(value), {a, bias},
                        [m, c](Node<T>& n) {
                          auto& pa = parent(n, 0);
                          auto& pb = parent(n, 1);
                          for (std::size_t r = 0; r < m; ++r) {
                            for (std::size_t j = 0; j < c; ++j) {
                              const T g = n.grad[r * c + j];
                              if (pa.requires_grad) pa.grad[r * c + j] += g;
                              if (pb.requires_grad) pb.grad[j] += g;
                            }
                          }
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> value(a.numel());
  for (std::size_t i = 0; i < value.size(); ++i) {
    value[i] = a.data()[i] * factor;
  }
  return make_result<T>(a.shape(), std::move(value), {a},
                        [factor](Node<T>& n) {
                          auto& pa = parent(n, 0);
                          for (std::size_t i = 0; i < n.grad.size(); ++i) {
                            pa.grad[i] += n.grad[i] * factor;
                          }
                        });
}

template <typename T>
Tensor<T> map_unary(const Tensor<T>& x, std::function<T(T)> f,
                    std::function<T(T)> dfdx) {
  std::vector<T> value(x.numel());
  for (std::size_t i = 0; i < value.size(); ++i) value[i] = f(x.data()[i]);
  return make_result<T>(x.shape(), std::move(value), {x},
                        [dfdx = std::move(dfdx)](Node<T>& n) {
                          auto& px = parent(n, 0);
                          for (std::size_t i = 0; i < n.grad.size(); ++i) {
                            px.grad[i] += n.grad[i] * dfdx(px.value[i]);
                          }
                        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return map_unary<T>(
      a, [](T v) { return v > T(0) ? v : T(0); },
      [](T v) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return map_unary<T>(
      a, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v) {
        return T(0.5) * (T(1) + std::erf(v * inv_sqrt2)) +
               v * inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> value(a.numel());
  for (std::size_t i = 0; i < value.size(); ++i) {
    const T v = a.data()[i];
    value[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                         : std::exp(v) / (T(1) + std::exp(v));
  }
  return make_result<T>(a.shape(), value, {a}, [value](Node<T>& n) {
    auto& pa = parent(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      pa.grad[i] += n.grad[i] * value[i] * (T(1) - value[i]);
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps) {
  const std::size_t m = x.rows();
  const std::size_t c = x.cols();
  if (c == 0) throw DomainError("layer_norm over an empty axis");
  if (gamma.rows() != 1 || gamma.cols() != c || !(beta.shape() == gamma.shape())) {
    throw ShapeError("layer_norm: affine " + to_string(gamma.shape()) +
                     " for input " + to_string(x.shape()));
  }
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto rstd = std::make_shared<std::vector<T>>(m);
  std::vector<T> value(x.numel());
  for (std::size_t r = 0; r < m; ++r) {
    const T* row = x.data().data() + r * c;
    T mu = 0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= T(c);
    T var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= T(c);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < c; ++j) {
      const T h = (row[j] - mu) * rs;
      (*xhat)[r * c + j] = h;
      value[r * c + j] = h * gamma.data()[j] + beta.data()[j];
    }
  }
  return make_result<T>(
      x.shape(), std::move(value), {x, gamma, beta},
      [m, c, xhat, rstd](Node<T>& n) {
        auto& px = parent(n, 0);
        auto& pg = parent(n, 1);
        auto& pb = parent(n, 2);
        std::vector<T> dxhat(c);
        for (std::size_t r = 0; r < m; ++r) {
          T mean_d = 0;
          T mean_dx = 0;
          for (std::size_t j = 0; j < c; ++j) {
            const T g = n.grad[r * c + j];
            const T h = (*xhat)[r * c + j];
            if (pg.requires_grad) pg.grad[j] += g * h;
            if (pb.requires_grad) pb.grad[j] += g;
            dxhat[j] = g * pg.value[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * h;
          }
          if (!px.requires_grad) continue;
          mean_d /= T(c);
          mean_dx /= T(c);
          for (std::size_t j = 0; j < c; ++j) {
            px.grad[r * c + j] +=
                (*rstd)[r] * (dxhat[j] - mean_d - (*xhat)[r * c + j] * mean_dx);
          }
        }
      });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  const std::size_t m = x.rows();
  const std::size_t c = x.cols();
  if (c == 0) throw DomainError("softmax over an empty axis");
  std::vector<T> value(x.numel());
  for (std::size_t r = 0; r < m; ++r) {
    const T* row = x.data().data() + r * c;
    const T mx = *std::max_element(row, row + c);
    T z = 0;
    for (std::size_t j = 0; j < c; ++j) {
      value[r * c + j] = std::exp(row[j] - mx);
      z += value[r * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) value[r * c + j] /= z;
  }
  return make_result<T>(x.shape(), value, {x}, [m, c, value](Node<T>& n) {
    auto& px = parent(n, 0);
    for (std::size_t r = 0; r < m; ++r) {
      T dot = 0;
      for (std::size_t j = 0; j < c; ++j) {
        dot += n.grad[r * c + j] * value[r * c + j];
      }
      for (std::size_t j = 0; j < c; ++j) {
        px.grad[r * c + j] += value[r * c + j] * (n.grad[r * c + j] - dot);
      }
    }
  });
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& x) {
  const std::size_t m = x.rows();
  const std::size_t c = x.cols();
  if (c == 0) throw DomainError("log_softmax over an empty axis");
  std::vector<T> value(x.numel());
  for (std::size_t r = 0; r < m; ++r) {
    const T* row = x.data().data() + r * c;
    const T mx = *std::max_element(row, row + c);
    T z = 0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) value[r * c + j] = row[j] - lse;
  }
  return make_result<T>(x.shape(), value, {x}, [m, c, value](Node<T>& n) {
    auto& px = parent(n, 0);
    for (std::size_t r = 0; r < m; ++r) {
      T gsum = 0;
      for (std::size_t j = 0; j < c; ++j) gsum += n.grad[r * c + j];
      for (std::size_t j = 0; j < c; ++j) {
        px.grad[r * c + j] +=
            n.grad[r * c + j] - std::exp(value[r * c + j]) * gsum;
      }
    }
  });
}

template <typename T>
Tensor<T> causal_attention(const Tensor<T>& q, const Tensor<T>& k,
                           const Tensor<T>& v, std::size_t batch,
                           std::size_t window, std::size_t heads) {
  require_same(q.shape(), k.shape(), "causal_attention");
  require_same(q.shape(), v.shape(), "causal_attention");
  const std::size_t d = q.cols();
  if (q.rows() != batch * window) {
    throw ShapeError("causal_attention: " + std::to_string(q.rows()) +
                     " rows for batch " + std::to_string(batch) + " x window " +
                     std::to_string(window));
  }
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("causal_attention: width " + std::to_string(d) +
                     " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;
  const T inv_scale = T(1) / std::sqrt(T(dh));
  // probs[(b, h, i, j)] for j <= i; stored densely with zeros above diagonal.
  auto probs =
      std::make_shared<std::vector<T>>(batch * heads * window * window, T(0));
  std::vector<T> value(q.numel(), T(0));
  const T* Q = q.data().data();
  const T* K = k.data().data();
  const T* V = v.data().data();
  std::vector<T> scores(window);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < window; ++i) {
        const T* qi = Q + (b * window + i) * d + off;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
          const T* kj = K + (b * window + j) * d + off;
          T s = 0;
          for (std::size_t e = 0; e < dh; ++e) s += qi[e] * kj[e];
          scores[j] = s * inv_scale;
          mx = std::max(mx, scores[j]);
        }
        T z = 0;
        for (std::size_t j = 0; j <= i; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          z += scores[j];
        }
        T* prow = probs->data() + ((b * heads + h) * window + i) * window;
        T* out = value.data() + (b * window + i) * d + off;
        for (std::size_t j = 0; j <= i; ++j) {
          const T p = scores[j] / z;
          prow[j] = p;
          const T* vj = V + (b * window + j) * d + off;
          for (std::size_t e = 0; e < dh; ++e) out[e] += p * vj[e];
        }
      }
    }
  }
  return make_result<T>(
      q.shape(), std::move(value), {q, k, v},
      [=](Node<T>& n) {
        auto& pq = parent(n, 0);
        auto& pk = parent(n, 1);
        auto& pv = parent(n, 2);
        std::vector<T> dp(window);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = h * dh;
            for (std::size_t i = 0; i < window; ++i) {
              const T* prow =
                  probs->data() + ((b * heads + h) * window + i) * window;
              const T* go = n.grad.data() + (b * window + i) * d + off;
              T dot = 0;
              for (std::size_t j = 0; j <= i; ++j) {
                const T* vj = pv.value.data() + (b * window + j) * d + off;
                T s = 0;
                for (std::size_t e = 0; e < dh; ++e) s += go[e] * vj[e];
                dp[j] = s;
                dot += prow[j] * s;
                if (pv.requires_grad) {
                  T* gvj = pv.grad.data() + (b * window + j) * d + off;
                  for (std::size_t e = 0; e < dh; ++e) gvj[e] += prow[j] * go[e];
                }
              }
              const T* qi = pq.value.data() + (b * window + i) * d + off;
              T* gqi = pq.requires_grad
                           ? pq.grad.data() + (b * window + i) * d + off
                           : nullptr;
              for (std::size_t j = 0; j <= i; ++j) {
                const T ds = prow[j] * (dp[j] - dot) * inv_scale;
                const T* kj = pk.value.data() + (b * window + j) * d + off;
                if (gqi) {
                  for (std::size_t e = 0; e < dh; ++e) gqi[e] += ds * kj[e];
                }
                if (pk.requires_grad) {
                  T* gkj = pk.grad.data() + (b * window + j) * d + off;
                  for (std::size_t e = 0; e < dh; ++e) gkj[e] += ds * qi[e];
                }
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table,
                    std::span<const std::int64_t> ids) {
  const std::size_t c = table.cols();
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows()) {
      throw ValidationError("embedding id " + std::to_string(id) +
                            " outside vocabulary of " +
                            std::to_string(table.rows()));
    }
    rows.push_back(static_cast<std::size_t>(id));
  }
  (void)c;
  return gather_rows<T>(table, rows);
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows) {
  const std::size_t c = x.cols();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<T> value(idx.size() * c);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= x.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(idx[r]) +
                       " outside " + to_string(x.shape()));
    }
    std::copy_n(x.data().data() + idx[r] * c, c, value.data() + r * c);
  }
  const Shape out{idx.size(), c};
  return make_result<T>(out, std::move(value), {x},
                        [c, idx = std::move(idx)](Node<T>& n) {
                          auto& px = parent(n, 0);
                          for (std::size_t r = 0; r < idx.size(); ++r) {
                            for (std::size_t j = 0; j < c; ++j) {
                              px.grad[idx[r] * c + j] += n.grad[r * c + j];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> tile_rows(const Tensor<T>& x, std::size_t times) {
  std::vector<std::size_t> idx;
  idx.reserve(times * x.rows());
  for (std::size_t t = 0; t < times; ++t) {
    for (std::size_t r = 0; r < x.rows(); ++r) idx.push_back(r);
  }
  return gather_rows<T>(x, idx);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape.numel() != x.numel()) {
    throw ShapeError("reshape: " + to_string(x.shape()) + " to " + to_string(shape));
  }
  std::vector<T> value(x.data().begin(), x.data().end());
  return make_result<T>(shape, std::move(value), {x}, [](Node<T>& n) {
    auto& px = parent(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) px.grad[i] += n.grad[i];
  });
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const std::size_t m = a.rows();
  const std::size_t ca = a.cols();
  const std::size_t cb = b.cols();
  std::vector<T> value(m * (ca + cb));
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(a.data().data() + r * ca, ca, value.data() + r * (ca + cb));
    std::copy_n(b.data().data() + r * cb, cb,
                value.data() + r * (ca + cb) + ca);
  }
  return make_result<T>({m, ca + cb}, std::move(value), {a, b},
                        [m, ca, cb](Node<T>& n) {
                          auto& pa = parent(n, 0);
                          auto& pb = parent(n, 1);
                          for (std::size_t r = 0; r < m; ++r) {
                            const T* g = n.grad.data() + r * (ca + cb);
                            if (pa.requires_grad) {
                              for (std::size_t j = 0; j < ca; ++j)
                                pa.grad[r * ca + j] += g[j];
                            }
                            if (pb.requires_grad) {
                              for (std::size_t j = 0; j < cb; ++j)
                                pb.grad[r * cb + j] += g[ca + j];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  return make_result<T>({1, 1}, {s}, {x}, [](Node<T>& n) {
    auto& px = parent(n, 0);
    for (auto& g : px.grad) g += n.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw DomainError("mean of an empty tensor");
  return scale<T>(sum<T>(x), T(1) / T(x.numel()));
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::span<const T> weights) {
  if (weights.size() != x.numel()) {
    throw ShapeError("weighted_sum: " + std::to_string(weights.size()) +
                     " weights for " + to_string(x.shape()));
  }
  std::vector<T> w(weights.begin(), weights.end());
  T s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += x.data()[i] * w[i];
  return make_result<T>({1, 1}, {s}, {x}, [w = std::move(w)](Node<T>& n) {
    auto& px = parent(n, 0);
    for (std::size_t i = 0; i < w.size(); ++i) px.grad[i] += n.grad[0] * w[i];
  });
}

template <typename T>
Tensor<T> nll_rows(const Tensor<T>& logits, std::span<const int> targets) {
  require_targets<T>(logits.rows(), targets, "nll_rows");
  const std::size_t m = logits.rows();
  const std::size_t c = logits.cols();
  if (c == 0) throw DomainError("nll over an empty class axis");
  std::vector<int> tg(targets.begin(), targets.end());
  for (int t : tg) {
    if (t >= static_cast<int>(c)) {
      throw ShapeError("nll_rows: target " + std::to_string(t) + " for " +
                       std::to_string(c) + " classes");
    }
  }
  auto probs = std::make_shared<std::vector<T>>(m * c);
  std::vector<T> value(m, T(0));
  for (std::size_t r = 0; r < m; ++r) {
    const T* row = logits.data().data() + r * c;
    const T mx = *std::max_element(row, row + c);
    T z = 0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) (*probs)[r * c + j] = std::exp(row[j] - lse);
    if (tg[r] >= 0) value[r] = lse - row[tg[r]];
  }
  return make_result<T>({m, 1}, std::move(value), {logits},
                        [m, c, probs, tg = std::move(tg)](Node<T>& n) {
                          auto& pl = parent(n, 0);
                          for (std::size_t r = 0; r < m; ++r) {
                            if (tg[r] < 0) continue;
                            const T g = n.grad[r];
                            for (std::size_t j = 0; j < c; ++j) {
                              const T onehot = static_cast<int>(j) == tg[r] ? T(1) : T(0);
                              pl.grad[r * c + j] += g * ((*probs)[r * c + j] - onehot);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> focal_rows(const Tensor<T>& p, std::span<const int> targets, T gamma,
                     T alpha, T floor) {
  if (p.cols() != 1) {
    throw ShapeError("focal_rows expects {N, 1} probabilities, got " +
                     to_string(p.shape()));
  }
  require_targets<T>(p.rows(), targets, "focal_rows");
  const std::size_t m = p.rows();
  std::vector<int> tg(targets.begin(), targets.end());
  // d loss / d p per row (zero where clamped or ignored).
  auto dldp = std::make_shared<std::vector<T>>(m, T(0));
  std::vector<T> value(m, T(0));
  for (std::size_t r = 0; r < m; ++r) {
    if (tg[r] < 0) continue;
    const T raw = p.data()[r];
    const bool clamped = raw < floor || raw > T(1) - floor;
    const T pc = std::clamp(raw, floor, T(1) - floor);
    const T pt = tg[r] == 1 ? pc : T(1) - pc;
    const T one_minus = T(1) - pt;
    const T lp = std::log(pt);
    value[r] = -alpha * std::pow(one_minus, gamma) * lp;
    if (!clamped) {
      // d/dpt [-a (1-pt)^g log pt] = a g (1-pt)^(g-1) log pt - a (1-pt)^g / pt
      T dpt = -alpha * std::pow(one_minus, gamma) / pt;
      if (gamma != T(0)) {
        dpt += alpha * gamma * std::pow(one_minus, gamma - T(1)) * lp;
      }
      (*dldp)[r] = tg[r] == 1 ? dpt : -dpt;
    }
  }
  return make_result<T>({m, 1}, std::move(value), {p}, [m, dldp](Node<T>& n) {
    auto& pp = parent(n, 0);
    for (std::size_t r = 0; r < m; ++r) pp.grad[r] += n.grad[r] * (*dldp)[r];
  });
}

double focal_loss(double p, int target, double gamma, double alpha) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("focal_loss: probability " + std::to_string(p) +
                      " outside (0, 1)");
  }
  if (target != 0 && target != 1) {
    throw DomainError("focal_loss: target must be 0 or 1");
  }
  const double pt = target == 1 ? p : 1.0 - p;
  return -alpha * std::pow(1.0 - pt, gamma) * std::log(pt);
}

double binary_cross_entropy(double p, int target) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("binary_cross_entropy: probability outside (0, 1)");
  }
  return target == 1 ? -std::log(p) : -std::log1p(-p);
}

#define ARM_INSTANTIATE_OPS(T)                                                 \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> add_row(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> scale(const Tensor<T>&, T);                               \
  template Tensor<T> relu(const Tensor<T>&);                                   \
  template Tensor<T> gelu(const Tensor<T>&);                                   \
  template Tensor<T> sigmoid(const Tensor<T>&);                                \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&,            \
                                const Tensor<T>&, T);                          \
  template Tensor<T> softmax_rows(const Tensor<T>&);                           \
  template Tensor<T> log_softmax_rows(const Tensor<T>&);                       \
  template Tensor<T> causal_attention(const Tensor<T>&, const Tensor<T>&,      \
                                      const Tensor<T>&, std::size_t,           \
                                      std::size_t, std::size_t);               \
  template Tensor<T> embedding(const Tensor<T>&,                               \
                               std::span<const std::int64_t>);                 \
  template Tensor<T> gather_rows(const Tensor<T>&,                             \
                                 std::span<const std::size_t>);                \
  template Tensor<T> tile_rows(const Tensor<T>&, std::size_t);                 \
  template Tensor<T> concat_cols(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                         \
  template Tensor<T> sum(const Tensor<T>&);                                    \
  template Tensor<T> mean(const Tensor<T>&);                                   \
  template Tensor<T> weighted_sum(const Tensor<T>&, std::span<const T>);       \
  template Tensor<T> nll_rows(const Tensor<T>&, std::span<const int>);         \
  template Tensor<T> focal_rows(const Tensor<T>&, std::span<const int>, T, T,  \
                                T);                                            \
  template Tensor<T> map_unary(const Tensor<T>&, std::function<T(T)>,          \
                               std::function<T(T)>);

ARM_INSTANTIATE_OPS(float)
ARM_INSTANTIATE_OPS(double)

#undef ARM_INSTANTIATE_OPS

}  // namespace arm::tc
