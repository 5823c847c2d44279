#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "galformer/numcore/rng.hpp"
#include "galformer/numcore/tensor.hpp"

namespace galformer::nc {

struct InitScheme {
  enum class Kind { zeros, constant, normal, uniform, xavier, linspace };
  Kind kind = Kind::zeros;
  double a = 0.0;  // constant value / normal sigma / uniform low / linspace start
  double b = 0.0;  // uniform high / linspace end

  static InitScheme zeros() { return {Kind::zeros}; }
  static InitScheme constant(double v) { return {Kind::constant, v}; }
  static InitScheme normal(double sigma) { return {Kind::normal, sigma}; }
  static InitScheme uniform(double lo, double hi) { return {Kind::uniform, lo, hi}; }
  static InitScheme xavier() { return {Kind::xavier}; }
  /// Evenly spaced values from `lo` to `hi` over the flattened tensor.
  static InitScheme linspace(double lo, double hi) { return {Kind::linspace, lo, hi}; }
};

/// Deterministic initial values keyed by (seed, name): independent of the
/// order in which parameters are created.
template <std::floating_point T>
Tensor<T> seeded_init(const std::string& name, std::size_t rows, std::size_t cols,
                      const InitScheme& scheme, std::uint64_t seed) {
  const CounterRng rng(seed, name);
  const std::size_t n = rows * cols;
  std::vector<T> v(n, T(0));
  switch (scheme.kind) {
    case InitScheme::Kind::zeros:
      break;
    case InitScheme::Kind::constant:
      std::fill(v.begin(), v.end(), static_cast<T>(scheme.a));
      break;
    case InitScheme::Kind::normal:
      for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<T>(scheme.a * rng.normal(i));
      break;
    case InitScheme::Kind::uniform:
      for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<T>(scheme.a + (scheme.b - scheme.a) * rng.uniform(i));
      break;
    case InitScheme::Kind::xavier: {
      // weights are stored [fan_in x fan_out]
      const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
      for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<T>(bound * (2.0 * rng.uniform(i) - 1.0));
      break;
    }
    case InitScheme::Kind::linspace:
      for (std::size_t i = 0; i < n; ++i) {
        const double t = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
        v[i] = static_cast<T>(scheme.a + (scheme.b - scheme.a) * t);
      }
      break;
  }
  return Tensor<T>::from(rows, cols, std::move(v), true);
}

/// Adam moments for one parameter.
template <std::floating_point T>
struct AdamSlot {
  std::vector<T> m;
  std::vector<T> v;
  std::uint64_t steps = 0;
};

/// Named learnable parameters, iterated in sorted-name order.
template <std::floating_point T>
class ParamStore {
 public:
  Tensor<T>& create(const std::string& name, std::size_t rows, std::size_t cols,
                    const InitScheme& scheme, std::uint64_t seed) {
    if (params_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
    return params_.emplace(name, seeded_init<T>(name, rows, cols, scheme, seed)).first->second;
  }

  /// Insert or overwrite (checkpoint loading).
  void put(const std::string& name, Tensor<T> t) {
    t.set_requires_grad(true);
    params_[name] = std::move(t);
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor<T>& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }
  Tensor<T>& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  std::size_t element_count(const std::function<bool(const std::string&)>& filter = {}) const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_)
      if (!filter || filter(name)) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
  }

  std::map<std::string, AdamSlot<T>>& optimizer_state() { return adam_; }
  const std::map<std::string, AdamSlot<T>>& optimizer_state() const { return adam_; }

  /// Deep copy of values and optimizer state.
  ParamStore clone() const {
    ParamStore out;
    for (const auto& [name, t] : params_) out.put(name, t.detach());
    out.adam_ = adam_;
    return out;
  }

 private:
  std::map<std::string, Tensor<T>> params_;
  std::map<std::string, AdamSlot<T>> adam_;
};

}  // namespace galformer::nc
