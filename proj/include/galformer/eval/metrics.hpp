#pragma once

// Evaluation metrics. Missing labels are std::nullopt and are skipped.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "galformer/errors.hpp"
#include "galformer/molio/types.hpp"

namespace galformer::eval {

using Label = std::optional<double>;

/// Mann-Whitney AUROC from average ranks, ties counting one half.
inline double auroc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw ShapeMismatch("auroc: scores and labels differ in length");
  std::vector<std::pair<double, bool>> obs;
  obs.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    const double y = *labels[i];
    if (y != 0.0 && y != 1.0) throw UndefinedMetric("auroc: label " + std::to_string(y) + " is not binary");
    if (!std::isfinite(scores[i])) throw UndefinedMetric("auroc: non-finite score");
    obs.emplace_back(scores[i], y == 1.0);
  }
  std::size_t pos = 0;
  for (const auto& o : obs) pos += o.second;
  const std::size_t neg = obs.size() - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetric("auroc needs at least one positive and one negative");
  std::sort(obs.begin(), obs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // sum of 1-based average ranks of the positives
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < obs.size();) {
    std::size_t j = i;
    std::size_t p = 0;
    while (j < obs.size() && obs[j].first == obs[i].first) p += obs[j++].second;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += avg * static_cast<double>(p);
    i = j;
  }
  const double P = static_cast<double>(pos), N = static_cast<double>(neg);
  return (rank_sum - P * (P + 1.0) / 2.0) / (P * N);
}

inline double auroc(std::span<const double> scores, std::span<const double> labels) {
  std::vector<Label> l(labels.begin(), labels.end());
  return auroc(scores, std::span<const Label>(l));
}

inline double rmse(std::span<const double> preds, std::span<const Label> labels) {
  if (preds.size() != labels.size()) throw ShapeMismatch("rmse: predictions and labels differ in length");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!labels[i]) continue;
    const double d = preds[i] - *labels[i];
    s += d * d;
    ++n;
  }
  if (n == 0) throw UndefinedMetric("rmse over an empty mask");
  return std::sqrt(s / static_cast<double>(n));
}

inline double rmse(std::span<const double> preds, std::span<const double> labels) {
  std::vector<Label> l(labels.begin(), labels.end());
  return rmse(preds, std::span<const Label>(l));
}

/// points: row-major [n x d]; labels: any integer cluster ids.
inline double davies_bouldin(std::span<const double> points, std::size_t d, std::span<const int> labels) {
  if (d == 0 || points.size() != labels.size() * d) throw ShapeMismatch("davies_bouldin: points are not [n x d]");
  std::vector<int> ids(labels.begin(), labels.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const auto k = ids.size();
  if (k < 2) throw DegenerateClusters("davies_bouldin needs at least two clusters");
  auto slot = [&](int l) { return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), l) - ids.begin()); };

  std::vector<double> centroid(k * d, 0.0), spread(k, 0.0);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = slot(labels[i]);
    ++count[c];
    for (std::size_t t = 0; t < d; ++t) centroid[c * d + t] += points[i * d + t];
  }
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t t = 0; t < d; ++t) centroid[c * d + t] /= static_cast<double>(count[c]);
  auto dist = [&](const double* a, const double* b) {
    double s = 0;
    for (std::size_t t = 0; t < d; ++t) s += (a[t] - b[t]) * (a[t] - b[t]);
    return std::sqrt(s);
  };
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = slot(labels[i]);
    spread[c] += dist(&points[i * d], &centroid[c * d]);
  }
  for (std::size_t c = 0; c < k; ++c) spread[c] /= static_cast<double>(count[c]);

  double total = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    double worst = 0.0;
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      const double m = dist(&centroid[a * d], &centroid[b * d]);
      if (m < 1e-12)
        throw DegenerateClusters("clusters " + std::to_string(ids[a]) + " and " + std::to_string(ids[b]) +
                                 " share a centroid");
      worst = std::max(worst, (spread[a] + spread[b]) / m);
    }
    total += worst;
  }
  return total / static_cast<double>(k);
}

struct MetricReport {
  molio::TaskKind kind = molio::TaskKind::classification;
  std::vector<std::optional<double>> per_task;  // nullopt: skipped
  std::optional<double> aggregate;              // mean over evaluated tasks
  std::size_t skipped = 0;

  const char* metric_name() const { return kind == molio::TaskKind::classification ? "auroc" : "rmse"; }
};

/// preds: row-major [n x tasks]; labels[i][t]. Classification tasks lacking
/// either class, or regression tasks with no labels, are skipped and counted.
inline MetricReport evaluate_tasks(std::span<const double> preds, const std::vector<std::vector<Label>>& labels,
                                   std::size_t tasks, molio::TaskKind kind) {
  if (preds.size() != labels.size() * tasks) throw ShapeMismatch("evaluate_tasks: predictions are not [n x tasks]");
  MetricReport r;
  r.kind = kind;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t t = 0; t < tasks; ++t) {
    std::vector<double> s(labels.size());
    std::vector<Label> y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i].size() != tasks) throw ShapeMismatch("evaluate_tasks: label row width");
      s[i] = preds[i * tasks + t];
      y[i] = labels[i][t];
    }
    std::optional<double> v;
    if (kind == molio::TaskKind::classification) {
      bool has_pos = false, has_neg = false;
      for (const auto& l : y)
        if (l) (*l == 1.0 ? has_pos : has_neg) = true;
      if (has_pos && has_neg) v = auroc(s, y);
    } else if (std::any_of(y.begin(), y.end(), [](const Label& l) { return l.has_value(); })) {
      v = rmse(s, y);
    }
    r.per_task.push_back(v);
    if (v) {
      sum += *v;
      ++used;
    } else {
      ++r.skipped;
    }
  }
  if (used) r.aggregate = sum / static_cast<double>(used);
  return r;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

inline MeanStd mean_std(std::span<const double> v) {
  MeanStd m;
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(s / static_cast<double>(v.size()));
  return m;
}

}  // namespace galformer::eval
