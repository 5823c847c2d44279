#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "galformer/numcore/rng.hpp"
#include "galformer/numcore/tensor.hpp"

namespace galformer::nc {

namespace detail {

inline void require(bool ok, const char* op, std::size_t ar, std::size_t ac, std::size_t br,
                    std::size_t bc) {
  if (!ok) {
    throw ShapeMismatch(std::string(op) + ": " + shape_str(ar, ac) + " vs " +
                        shape_str(br, bc));
  }
}

inline std::size_t bdim(std::size_t a, std::size_t b, bool& ok) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  ok = false;
  return 0;
}

/// Elementwise binary op with 2-D broadcasting (a dimension of 1 stretches).
template <std::floating_point T, class F, class DA, class DB>
Tensor<T> broadcast_binary(const char* name, const Tensor<T>& a, const Tensor<T>& b, F f,
                           DA dfa, DB dfb) {
  bool ok = true;
  const std::size_t r = bdim(a.rows(), b.rows(), ok);
  const std::size_t c = bdim(a.cols(), b.cols(), ok);
  require(ok, name, a.rows(), a.cols(), b.rows(), b.cols());
  const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  auto ia = [=](std::size_t i, std::size_t j) { return (ar == 1 ? 0 : i) * ac + (ac == 1 ? 0 : j); };
  auto ib = [=](std::size_t i, std::size_t j) { return (br == 1 ? 0 : i) * bc + (bc == 1 ? 0 : j); };
  std::vector<T> out(r * c);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = f(av[ia(i, j)], bv[ib(i, j)]);
  return make_result<T>(r, c, std::move(out), {&a, &b}, [=](Node<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t k = i * c + j;
        const T g = n.grad[k];
        const T x = pa.value[ia(i, j)];
        const T y = pb.value[ib(i, j)];
        if (pa.requires_grad) pa.grad[ia(i, j)] += g * dfa(x, y, n.value[k]);
        if (pb.requires_grad) pb.grad[ib(i, j)] += g * dfb(x, y, n.value[k]);
      }
    }
  });
}

template <std::floating_point T, class F, class D>
Tensor<T> unary(const Tensor<T>& a, F f, D df) {
  std::vector<T> out(a.size());
  const auto av = a.data();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = f(av[k]);
  return make_result<T>(a.rows(), a.cols(), std::move(out), {&a}, [=](Node<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t k = 0; k < n.value.size(); ++k) p.grad[k] += n.grad[k] * df(p.value[k], n.value[k]);
  });
}

}  // namespace detail

// ---- elementwise -------------------------------------------------------------

template <std::floating_point T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); },
      [](T, T, T) { return T(1); });
}

template <std::floating_point T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); },
      [](T, T, T) { return T(-1); });
}

template <std::floating_point T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y, T) { return y; },
      [](T x, T, T) { return x; });
}

template <std::floating_point T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary<T>(
      "div", a, b, [](T x, T y) { return x / y; }, [](T, T y, T) { return T(1) / y; },
      [](T x, T y, T) { return -x / (y * y); });
}

template <std::floating_point T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <std::floating_point T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <std::floating_point T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <std::floating_point T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

template <std::floating_point T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return detail::unary<T>(a, [s](T x) { return s * x; }, [s](T, T) { return s; });
}

template <std::floating_point T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return detail::unary<T>(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <std::floating_point T>
Tensor<T> neg(const Tensor<T>& a) { return scale(a, T(-1)); }

template <std::floating_point T>
Tensor<T> square(const Tensor<T>& a) {
  return detail::unary<T>(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <std::floating_point T>
Tensor<T> exp(const Tensor<T>& a) {
  return detail::unary<T>(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <std::floating_point T>
Tensor<T> log(const Tensor<T>& a) {
  return detail::unary<T>(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

/// sqrt with a zero subgradient at 0, so RMSE of a perfect fit stays finite.
template <std::floating_point T>
Tensor<T> sqrt(const Tensor<T>& a) {
  return detail::unary<T>(
      a, [](T x) { return std::sqrt(x); },
      [](T, T y) { return y > T(0) ? T(0.5) / y : T(0); });
}

/// NaN passes through rather than being clipped to zero, so a broken input
/// still surfaces in the loss.
template <std::floating_point T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary<T>(
      a, [](T x) { return x > T(0) || std::isnan(x) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

/// Exact (erf) GELU.
template <std::floating_point T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return detail::unary<T>(
      a, [](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); },
      [](T x, T) {
        return T(0.5) * (T(1) + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(T(-0.5) * x * x);
      });
}

/// log(1 + e^x), evaluated without overflow.
template <std::floating_point T>
Tensor<T> softplus(const Tensor<T>& a) {
  return detail::unary<T>(
      a, [](T x) { return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x))); },
      [](T x, T) { return T(1) / (T(1) + std::exp(-x)); });
}

template <std::floating_point T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary<T>(
      a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

/// max(|x|, floor): kernel widths are used through this clamp.
template <std::floating_point T>
Tensor<T> abs_floor(const Tensor<T>& a, T floor) {
  return detail::unary<T>(
      a, [floor](T x) { return std::max(std::abs(x), floor); },
      [floor](T x, T) { return std::abs(x) > floor ? (x > T(0) ? T(1) : T(-1)) : T(0); });
}

/// Multiply by an inverted-dropout mask drawn from a counter stream.
template <std::floating_point T>
Tensor<T> dropout(const Tensor<T>& a, double rate, const CounterRng& rng, std::uint64_t base) {
  if (rate <= 0.0) return a;
  std::vector<T> mask(a.size());
  const T keep_scale = T(1.0 / (1.0 - rate));
  for (std::size_t k = 0; k < mask.size(); ++k) mask[k] = rng.uniform(base + k) < rate ? T(0) : keep_scale;
  return mul(a, Tensor<T>::from(a.rows(), a.cols(), std::move(mask)));
}

// ---- linear algebra ------------------------------------------------------------

template <std::floating_point T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.cols() == b.rows(), "matmul", a.rows(), a.cols(), b.rows(), b.cols());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<T> out(m * n, T(0));
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    T* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      if (aip == T(0)) continue;
      const T* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_result<T>(m, n, std::move(out), {&a, &b}, [=](Node<T>& nd) {
    auto& pa = *nd.parents[0];
    auto& pb = *nd.parents[1];
    const T* g = nd.grad.data();
    if (pa.requires_grad) {
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          T s = T(0);
          const T* brow = pb.value.data() + p * n;
          const T* grow = g + i * n;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          pa.grad[i * k + p] += s;
        }
    }
    if (pb.requires_grad) {
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = pa.value[i * k + p];
          if (aip == T(0)) continue;
          T* brow = pb.grad.data() + p * n;
          const T* grow = g + i * n;
          for (std::size_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
        }
    }
  });
}

template <std::floating_point T>
Tensor<T> transpose(const Tensor<T>& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<T> out(r * c);
  const auto av = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return make_result<T>(c, r, std::move(out), {&a}, [=](Node<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) p.grad[i * c + j] += n.grad[j * r + i];
  });
}

/// Sum over all entries of the flattened elementwise product; returns 1 x 1.
template <std::floating_point T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.size() == b.size(), "dot", a.rows(), a.cols(), b.rows(), b.cols());
  T s = T(0);
  for (std::size_t k = 0; k < a.size(); ++k) s += a.data()[k] * b.data()[k];
  return make_result<T>(1, 1, {s}, {&a, &b}, [](Node<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    const T g = n.grad[0];
    for (std::size_t k = 0; k < pa.value.size(); ++k) {
      if (pa.requires_grad) pa.grad[k] += g * pb.value[k];
      if (pb.requires_grad) pb.grad[k] += g * pa.value[k];
    }
  });
}

// ---- reductions ------------------------------------------------------------------

template <std::floating_point T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = T(0);
  for (T v : a.data()) s += v;
  return make_result<T>(1, 1, {s}, {&a}, [](Node<T>& n) {
    auto& p = *n.parents[0];
    for (auto& g : p.grad) g += n.grad[0];
  });
}

template <std::floating_point T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

/// axis 0 collapses rows (result 1 x cols); axis 1 collapses columns (rows x 1).
template <std::floating_point T>
Tensor<T> sum(const Tensor<T>& a, int axis) {
  const std::size_t r = a.rows(), c = a.cols();
  const bool over_rows = axis == 0;
  std::vector<T> out(over_rows ? c : r, T(0));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[over_rows ? j : i] += a.data()[i * c + j];
  return make_result<T>(over_rows ? 1 : r, over_rows ? c : 1, std::move(out), {&a},
                        [=](Node<T>& n) {
                          auto& p = *n.parents[0];
                          for (std::size_t i = 0; i < r; ++i)
                            for (std::size_t j = 0; j < c; ++j)
                              p.grad[i * c + j] += n.grad[over_rows ? j : i];
                        });
}

template <std::floating_point T>
Tensor<T> mean(const Tensor<T>& a, int axis) {
  const std::size_t count = axis == 0 ? a.rows() : a.cols();
  return scale(sum(a, axis), T(1) / static_cast<T>(count));
}

// ---- normalisation ------------------------------------------------------------

/// Softmax along axis 1 (each row) or axis 0 (each column), max-shifted.
template <std::floating_point T>
Tensor<T> softmax(const Tensor<T>& a, int axis = 1) {
  const std::size_t r = a.rows(), c = a.cols();
  const bool rows = axis != 0;
  const std::size_t lines = rows ? r : c, len = rows ? c : r;
  auto at = [=](std::size_t line, std::size_t k) { return rows ? line * c + k : k * c + line; };
  std::vector<T> out(r * c);
  const auto av = a.data();
  for (std::size_t l = 0; l < lines; ++l) {
    T mx = av[at(l, 0)];
    for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, av[at(l, k)]);
    T s = T(0);
    for (std::size_t k = 0; k < len; ++k) s += out[at(l, k)] = std::exp(av[at(l, k)] - mx);
    for (std::size_t k = 0; k < len; ++k) out[at(l, k)] /= s;
  }
  return make_result<T>(r, c, std::move(out), {&a}, [=](Node<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t l = 0; l < lines; ++l) {
      T d = T(0);
      for (std::size_t k = 0; k < len; ++k) d += n.grad[at(l, k)] * n.value[at(l, k)];
      for (std::size_t k = 0; k < len; ++k) p.grad[at(l, k)] += n.value[at(l, k)] * (n.grad[at(l, k)] - d);
    }
  });
}

/// Row-wise log-softmax.
template <std::floating_point T>
Tensor<T> log_softmax(const Tensor<T>& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<T> out(r * c);
  const auto av = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    T mx = av[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, av[i * c + j]);
    T s = T(0);
    for (std::size_t j = 0; j < c; ++j) s += std::exp(av[i * c + j] - mx);
    const T lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = av[i * c + j] - lse;
  }
  return make_result<T>(r, c, std::move(out), {&a}, [=](Node<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < r; ++i) {
      T gs = T(0);
      for (std::size_t j = 0; j < c; ++j) gs += n.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        p.grad[i * c + j] += n.grad[i * c + j] - std::exp(n.value[i * c + j]) * gs;
    }
  });
}

/// Row-wise layer normalisation without affine parameters.
template <std::floating_point T>
Tensor<T> layer_norm(const Tensor<T>& a, T eps = T(1e-5)) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<T> out(r * c);
  std::vector<T> inv_std(r);
  const auto av = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    T mu = T(0);
    for (std::size_t j = 0; j < c; ++j) mu += av[i * c + j];
    mu /= static_cast<T>(c);
    T var = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      const T d = av[i * c + j] - mu;
      var += d * d;
    }
    var /= static_cast<T>(c);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = (av[i * c + j] - mu) * inv_std[i];
  }
  return make_result<T>(r, c, std::move(out), {&a}, [=, inv_std = std::move(inv_std)](Node<T>& n) {
    auto& p = *n.parents[0];
    const T cn = static_cast<T>(c);
    for (std::size_t i = 0; i < r; ++i) {
      T mg = T(0), mgy = T(0);
      for (std::size_t j = 0; j < c; ++j) {
        mg += n.grad[i * c + j];
        mgy += n.grad[i * c + j] * n.value[i * c + j];
      }
      mg /= cn;
      mgy /= cn;
      for (std::size_t j = 0; j < c; ++j)
        p.grad[i * c + j] += inv_std[i] * (n.grad[i * c + j] - mg - n.value[i * c + j] * mgy);
    }
  });
}

// ---- structure ------------------------------------------------------------------

template <std::floating_point T>
Tensor<T> slice(const Tensor<T>& a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  if (r0 > r1 || c0 > c1 || r1 > a.rows() || c1 > a.cols()) {
    throw ShapeMismatch("slice [" + std::to_string(r0) + ":" + std::to_string(r1) + ", " +
                        std::to_string(c0) + ":" + std::to_string(c1) + "] of " +
                        shape_str(a.rows(), a.cols()));
  }
  const std::size_t r = r1 - r0, c = c1 - c0, ac = a.cols();
  std::vector<T> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.data()[(i + r0) * ac + j + c0];
  return make_result<T>(r, c, std::move(out), {&a}, [=](Node<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) p.grad[(i + r0) * ac + j + c0] += n.grad[i * c + j];
  });
}

template <std::floating_point T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t r0, std::size_t r1) {
  return slice(a, r0, r1, 0, a.cols());
}

template <std::floating_point T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t c0, std::size_t c1) {
  return slice(a, 0, a.rows(), c0, c1);
}

template <std::floating_point T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows of nothing");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    detail::require(p.cols() == c, "concat_rows", parts[0].rows(), c, p.rows(), p.cols());
    r += p.rows();
  }
  std::vector<T> out;
  out.reserve(r * c);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result_n<T>(r, c, std::move(out), parts, [](Node<T>& n) {
    std::size_t off = 0;
    for (auto& p : n.parents) {
      if (p->requires_grad)
        for (std::size_t k = 0; k < p->value.size(); ++k) p->grad[k] += n.grad[off + k];
      off += p->value.size();
    }
  });
}

template <std::floating_point T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  const Tensor<T> parts[] = {a, b};
  return concat_rows<T>(std::span<const Tensor<T>>(parts));
}

template <std::floating_point T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols of nothing");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == r, "concat_cols", r, parts[0].cols(), p.rows(), p.cols());
    c += p.cols();
  }
  std::vector<T> out(r * c);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out[i * c + off + j] = p.data()[i * p.cols() + j];
    off += p.cols();
  }
  return make_result_n<T>(r, c, std::move(out), parts, [r, c](Node<T>& n) {
    std::size_t off = 0;
    for (auto& p : n.parents) {
      if (p->requires_grad)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < p->cols; ++j) p->grad[i * p->cols + j] += n.grad[i * c + off + j];
      off += p->cols;
    }
  });
}

template <std::floating_point T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  const Tensor<T> parts[] = {a, b};
  return concat_cols<T>(std::span<const Tensor<T>>(parts));
}

/// Row gather; rows may repeat.
template <std::floating_point T>
Tensor<T> index_rows(const Tensor<T>& a, std::vector<std::size_t> idx) {
  const std::size_t c = a.cols();
  std::vector<T> out(idx.size() * c);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= a.rows())
      throw ShapeMismatch("index_rows: row " + std::to_string(idx[k]) + " of " + shape_str(a.rows(), c));
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(idx[k] * c), c, out.begin() + static_cast<std::ptrdiff_t>(k * c));
  }
  const std::size_t r = idx.size();
  return make_result<T>(r, c, std::move(out), {&a}, [c, idx = std::move(idx)](Node<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < c; ++j) p.grad[idx[k] * c + j] += n.grad[k * c + j];
  });
}

/// One term of a sparse linear map: out[out_index] += coef * in[in_index].
template <std::floating_point T>
struct GatherTerm {
  std::size_t out_index;
  std::size_t in_index;
  T coef;
};

/// Sparse weighted gather: every output entry is a fixed linear combination of
/// input entries. Path-averaged attention biases are built from this.
template <std::floating_point T>
Tensor<T> gather_sum(const Tensor<T>& a, std::size_t rows, std::size_t cols,
                     std::shared_ptr<const std::vector<GatherTerm<std::type_identity_t<T>>>> terms) {
  std::vector<T> out(rows * cols, T(0));
  const auto av = a.data();
  for (const auto& t : *terms) {
    if (t.in_index >= av.size() || t.out_index >= out.size())
      throw ShapeMismatch("gather_sum term out of range for " + shape_str(a.rows(), a.cols()));
    out[t.out_index] += t.coef * av[t.in_index];
  }
  return make_result<T>(rows, cols, std::move(out), {&a}, [terms](Node<T>& n) {
    auto& p = *n.parents[0];
    for (const auto& t : *terms) p.grad[t.in_index] += t.coef * n.grad[t.out_index];
  });
}

/// Picks entry (i, idx[i]) of every row; returns rows x 1.
template <std::floating_point T>
Tensor<T> pick(const Tensor<T>& a, const std::vector<std::size_t>& idx) {
  if (idx.size() != a.rows()) throw ShapeMismatch("pick: index count vs " + shape_str(a.rows(), a.cols()));
  auto terms = std::make_shared<std::vector<GatherTerm<T>>>();
  terms->reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= a.cols()) throw ShapeMismatch("pick: column " + std::to_string(idx[i]) + " of " + shape_str(a.rows(), a.cols()));
    terms->push_back({i, i * a.cols() + idx[i], T(1)});
  }
  return gather_sum<T>(a, a.rows(), 1, std::move(terms));
}

}  // namespace galformer::nc
