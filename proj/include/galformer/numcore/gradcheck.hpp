#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "galformer/numcore/param_store.hpp"
#include "galformer/numcore/tensor.hpp"

namespace galformer::nc {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

enum class Stencil { central3, central5 };

/// Compares backward() against central differences for every element of every
/// listed tensor. `loss` must rebuild the forward pass from current values.
/// central5 cancels the h^2 term, for losses whose curvature makes the
/// three-point estimate too coarse before roundoff sets in.
template <std::floating_point T>
GradCheckResult check_gradients(const std::function<Tensor<T>()>& loss,
                                std::vector<std::pair<std::string, Tensor<T>>> inputs, double h,
                                double floor, Stencil stencil = Stencil::central3) {
  for (auto& [_, t] : inputs) t.zero_grad();
  backward(loss());
  std::vector<std::vector<T>> analytic;
  for (auto& [_, t] : inputs) {
    if (t.has_grad()) analytic.emplace_back(t.grad().begin(), t.grad().end());
    else analytic.emplace_back(t.size(), T(0));
    t.zero_grad();
  }

  GradCheckResult res;
  NoGradGuard no_grad;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    auto data = inputs[p].second.mutable_data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      const T orig = data[k];
      auto at = [&](double d) {
        data[k] = static_cast<T>(orig + d);
        const double v = loss().item();
        data[k] = orig;
        return v;
      };
      const double numeric = stencil == Stencil::central3
                                 ? (at(h) - at(-h)) / (2.0 * h)
                                 : (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
      const double err = relative_error(analytic[p][k], numeric, floor);
      ++res.checked;
      if (err > res.max_rel_error || res.checked == 1) {
        res.max_rel_error = err;
        res.worst_param = inputs[p].first;
        res.worst_index = k;
        res.worst_analytic = analytic[p][k];
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

template <std::floating_point T>
GradCheckResult check_gradients(const std::function<Tensor<T>()>& loss, ParamStore<T>& store,
                                double h, double floor, Stencil stencil = Stencil::central3) {
  std::vector<std::pair<std::string, Tensor<T>>> inputs;
  for (auto& [name, t] : store) inputs.emplace_back(name, t);
  return check_gradients<T>(loss, std::move(inputs), h, floor, stencil);
}

}  // namespace galformer::nc
