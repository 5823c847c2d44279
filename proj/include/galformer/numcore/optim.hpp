#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>

#include "galformer/numcore/param_store.hpp"

namespace galformer::nc {

struct OptimizerConfig {
  double peak_lr = 2e-4;
  double weight_decay = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double warmup_frac = 0.05;
  std::int64_t total_steps = 1;
  double poly_power = 1.0;

  void validate() const {
    if (!(warmup_frac >= 0.0 && warmup_frac < 1.0)) throw ConfigError("warmup_frac must lie in [0, 1)");
    if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
  }
  std::int64_t warmup_steps() const {
    return static_cast<std::int64_t>(std::llround(warmup_frac * static_cast<double>(total_steps)));
  }
};

/// Linear warmup to `peak_lr`, then polynomial decay to zero at `total_steps`.
/// Steps are 1-based.
inline double learning_rate(const OptimizerConfig& cfg, std::int64_t step) {
  const std::int64_t warm = cfg.warmup_steps();
  if (step <= 0) return 0.0;
  if (warm > 0 && step <= warm) return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(warm);
  if (step >= cfg.total_steps) return 0.0;
  const double frac = static_cast<double>(step - warm) / static_cast<double>(cfg.total_steps - warm);
  return cfg.peak_lr * std::pow(1.0 - frac, cfg.poly_power);
}

/// One Adam update with decoupled weight decay over every parameter accepted by
/// `filter` (all when empty). Gradients of every parameter are cleared afterwards.
/// Returns the learning rate used.
template <std::floating_point T>
double adam_step(ParamStore<T>& store, const OptimizerConfig& cfg, std::int64_t step,
                 const std::function<bool(const std::string&)>& filter = {}) {
  const double lr = learning_rate(cfg, step);
  auto& state = store.optimizer_state();
  for (auto& [name, param] : store) {
    if (filter && !filter(name)) continue;
    if (!param.has_grad()) continue;
    auto& slot = state[name];
    if (slot.m.empty()) {
      slot.m.assign(param.size(), T(0));
      slot.v.assign(param.size(), T(0));
    }
    ++slot.steps;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(slot.steps));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(slot.steps));
    auto w = param.mutable_data();
    const auto g = param.grad();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      slot.m[k] = static_cast<T>(cfg.beta1 * slot.m[k] + (1.0 - cfg.beta1) * gk);
      slot.v[k] = static_cast<T>(cfg.beta2 * slot.v[k] + (1.0 - cfg.beta2) * gk * gk);
      const double mhat = slot.m[k] / bc1;
      const double vhat = slot.v[k] / bc2;
      const double update = mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * w[k];
      w[k] = static_cast<T>(w[k] - lr * update);
    }
  }
  store.zero_grad();
  return lr;
}

}  // namespace galformer::nc
