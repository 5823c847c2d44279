#pragma once

// Laplacian positional encoding over the real line nodes.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "galformer/errors.hpp"
#include "galformer/linegraph/line_graph.hpp"

namespace galformer::sc {

inline constexpr double kTrivialEigenvalue = 1e-8;

struct SymmetricEigen {
  std::vector<double> values;   // ascending
  std::vector<double> vectors;  // row-major [n x n], column k pairs with values[k]
};

/// Cyclic Jacobi rotations on a dense symmetric matrix (row-major, n x n).
inline SymmetricEigen jacobi_eigen(std::vector<double> a, std::size_t n, int max_sweeps = 100) {
  if (a.size() != n * n) throw DimensionMismatch("jacobi_eigen: matrix is not n x n");
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  auto at = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };

  double scale = 0.0;
  for (double x : a) scale = std::max(scale, std::abs(x));
  const double tol = 1e-15 * std::max(scale, 1.0);
  bool converged = n <= 1;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off = std::max(off, std::abs(at(p, q)));
    if (off <= tol) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (std::abs(apq) <= tol * 1e-3) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off = std::max(off, std::abs(at(p, q)));
    if (off > tol) throw EigenNoConvergence("Jacobi exceeded " + std::to_string(max_sweeps) + " sweeps");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return at(x, x) < at(y, y); });
  SymmetricEigen out;
  out.vectors.assign(n * n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    out.values.push_back(at(order[k], order[k]));
    for (std::size_t r = 0; r < n; ++r) out.vectors[r * n + k] = v[r * n + order[k]];
  }
  return out;
}

/// Dense I - D^-1/2 A D^-1/2 of the real line nodes; isolated nodes get a zero row.
inline std::vector<double> normalized_laplacian(const lg::LineGraph& g) {
  const std::size_t n = g.n_nodes();
  std::vector<double> deg(n, 0.0);
  for (const auto& e : g.edges) {
    deg[e.i] += 1.0;
    deg[e.j] += 1.0;
  }
  std::vector<double> L(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (deg[i] > 0) L[i * n + i] = 1.0;
  for (const auto& e : g.edges) {
    const double w = -1.0 / std::sqrt(deg[e.i] * deg[e.j]);
    L[e.i * n + e.j] = w;
    L[e.j * n + e.i] = w;
  }
  return L;
}

struct PositionalEncoding {
  std::size_t n = 0, k = 0;
  std::vector<double> vectors;      // row-major [n x k], zero-padded
  std::vector<double> eigenvalues;  // the non-trivial ones used, ascending
};

/// Eigenvectors of the K smallest non-trivial eigenvalues, each with its
/// largest-magnitude component made positive.
inline PositionalEncoding normalized_laplacian_eigenvectors(const lg::LineGraph& g, std::size_t K,
                                                            int max_sweeps = 100) {
  const std::size_t n = g.n_nodes();
  if (n == 0) throw EmptyLineGraph("positional encoding of an empty line graph");
  const auto eig = jacobi_eigen(normalized_laplacian(g), n, max_sweeps);
  PositionalEncoding pe;
  pe.n = n;
  pe.k = K;
  pe.vectors.assign(n * K, 0.0);
  std::size_t col = 0;
  for (std::size_t e = 0; e < n && col < K; ++e) {
    if (eig.values[e] < kTrivialEigenvalue) continue;
    double big = 0.0;
    for (std::size_t r = 0; r < n; ++r) big = std::max(big, std::abs(eig.vectors[r * n + e]));
    double sign = 1.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double x = eig.vectors[r * n + e];
      if (std::abs(x) >= big - 1e-10) {
        sign = x < 0 ? -1.0 : 1.0;
        break;
      }
    }
    for (std::size_t r = 0; r < n; ++r) pe.vectors[r * K + col] = sign * eig.vectors[r * n + e];
    pe.eigenvalues.push_back(eig.values[e]);
    ++col;
  }
  return pe;
}

}  // namespace galformer::sc
