#pragma once

// Supervised fine-tuning of the 2-D encoder plus prediction head, with the
// learning-rate x weight-decay grid, validation-based epoch selection and
// per-seed aggregation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "galformer/errors.hpp"
#include "galformer/eval/metrics.hpp"
#include "galformer/finetune/config.hpp"
#include "galformer/io/config_json.hpp"
#include "galformer/model/heads.hpp"
#include "galformer/model/prepared.hpp"
#include "galformer/model/transformer.hpp"
#include "galformer/numcore/numcore.hpp"

namespace galformer::finetune {

using json = nlohmann::json;
using eval::Label;
using molio::TaskKind;

struct SplitAssignment {
  std::vector<std::size_t> train, valid, test;
};

/// Largest-remainder apportionment of n items; leftover units go to the
/// largest fractional parts, earlier parts first on ties.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> out{};
  std::array<double, 3> frac{};
  std::size_t used = 0;
  for (int k = 0; k < 3; ++k) {
    const double q = ratios[k] * static_cast<double>(n);
    out[k] = static_cast<std::size_t>(std::floor(q + 1e-9));
    frac[k] = q - static_cast<double>(out[k]);
    used += out[k];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
  for (std::size_t r = 0; used < n; ++r, ++used) ++out[order[r % 3]];
  return out;
}

using Splitter = std::function<SplitAssignment(std::size_t n, const std::array<double, 3>& ratios, std::uint64_t seed)>;

/// Seeded random split (stands in for a scaffold split).
inline SplitAssignment random_split(std::size_t n, const std::array<double, 3>& ratios, std::uint64_t seed) {
  if (n < 10) throw DatasetTooSmall("splitting needs at least 10 molecules, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  nc::Rng rng(nc::mix_keys(seed, nc::fnv1a64("split")));
  rng.shuffle(order);
  const auto sz = split_sizes(n, ratios);
  SplitAssignment s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(sz[0]));
  s.valid.assign(order.begin() + static_cast<std::ptrdiff_t>(sz[0]),
                 order.begin() + static_cast<std::ptrdiff_t>(sz[0] + sz[1]));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(sz[0] + sz[1]), order.end());
  return s;
}

/// Masked mean over observed labels: sigmoid BCE (softplus(x) - x y) or the
/// square root of the mean squared error.
template <std::floating_point T>
nc::Tensor<T> finetune_loss(const nc::Tensor<T>& out, const std::vector<std::vector<Label>>& labels, TaskKind kind) {
  const auto B = out.rows(), K = out.cols();
  if (labels.size() != B) throw ShapeMismatch("finetune_loss: " + std::to_string(labels.size()) + " label rows for " +
                                              nc::shape_str(B, K));
  std::vector<T> y(B * K, T(0)), m(B * K, T(0));
  std::size_t count = 0;
  for (std::size_t i = 0; i < B; ++i) {
    if (labels[i].size() != K) throw ShapeMismatch("finetune_loss: label row width");
    for (std::size_t t = 0; t < K; ++t)
      if (labels[i][t]) {
        y[i * K + t] = static_cast<T>(*labels[i][t]);
        m[i * K + t] = T(1);
        ++count;
      }
  }
  if (count == 0) throw AllLabelsMissing("every label in the batch is missing");
  const auto Y = nc::Tensor<T>::from(B, K, std::move(y));
  const auto Mk = nc::Tensor<T>::from(B, K, std::move(m));
  const T inv = T(1) / static_cast<T>(count);
  if (kind == TaskKind::classification)
    return nc::scale(nc::sum((nc::softplus(out) - out * Y) * Mk), inv);
  return nc::sqrt(nc::scale(nc::sum(nc::square((out - Y) * Mk)), inv));
}

inline bool is_encoder_param(const std::string& name) {
  return name.rfind("2d.feat.", 0) == 0 || name.rfind("2d.enc.", 0) == 0 || name.rfind("2d.layer", 0) == 0;
}
inline bool is_head_param(const std::string& name) { return name.rfind(model::kPredictionPrefix, 0) == 0; }

inline std::function<bool(const std::string&)> trainable_filter(bool freeze_encoder) {
  if (freeze_encoder) return [](const std::string& n) { return is_head_param(n); };
  return [](const std::string& n) { return is_head_param(n) || is_encoder_param(n); };
}

template <std::floating_point T>
struct LabeledSet {
  const std::vector<model::PreparedMolecule<T>>* mols = nullptr;
  std::vector<std::vector<Label>> labels;  // per molecule, per task
  std::size_t tasks = 0;
  TaskKind kind = TaskKind::classification;

  std::size_t size() const { return labels.size(); }
};

template <std::floating_point T>
LabeledSet<T> labeled_set(const std::vector<model::PreparedMolecule<T>>& mols, const molio::Dataset& ds) {
  if (mols.size() != ds.records.size()) throw DimensionMismatch("prepared molecules and records differ in count");
  LabeledSet<T> s;
  s.mols = &mols;
  s.tasks = static_cast<std::size_t>(ds.meta.task_count);
  s.kind = ds.meta.task_kind;
  if (s.tasks == 0) throw ConfigError("dataset has no label tasks");
  for (const auto& r : ds.records) {
    if (!r.g2d.labels) {
      s.labels.emplace_back(s.tasks, std::nullopt);
      continue;
    }
    if (r.g2d.labels->size() != s.tasks)
      throw DimensionMismatch("molecule '" + r.g2d.id + "' has " + std::to_string(r.g2d.labels->size()) + " labels");
    s.labels.push_back(*r.g2d.labels);
  }
  return s;
}

/// Head outputs [rows x tasks] for the listed molecules.
template <std::floating_point T>
nc::Tensor<T> batch_outputs(const LabeledSet<T>& data, const std::vector<std::size_t>& idx,
                            const nc::ParamStore<T>& store, const model::ModelConfig& cfg, model::ForwardContext& ctx) {
  std::vector<nc::Tensor<T>> reps;
  reps.reserve(idx.size());
  for (auto i : idx)
    reps.push_back(model::downstream_representation(model::forward_2d((*data.mols)[i].d2, store, cfg, ctx)));
  return model::prediction_head(nc::concat_rows(std::span<const nc::Tensor<T>>(reps)), store);
}

/// Probabilities (classification) or values, row-major [idx x tasks].
template <std::floating_point T>
std::vector<double> predict(const LabeledSet<T>& data, const std::vector<std::size_t>& idx,
                            const nc::ParamStore<T>& store, const model::ModelConfig& cfg) {
  nc::NoGradGuard ng;
  model::ForwardContext eval;
  std::vector<double> out;
  for (std::size_t lo = 0; lo < idx.size(); lo += 64) {
    const std::vector<std::size_t> chunk(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                                         idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), lo + 64)));
    const auto y = batch_outputs(data, chunk, store, cfg, eval);
    for (auto v : y.data()) {
      const double d = static_cast<double>(v);
      out.push_back(data.kind == TaskKind::classification ? 1.0 / (1.0 + std::exp(-d)) : d);
    }
  }
  return out;
}

template <std::floating_point T>
eval::MetricReport evaluate(const LabeledSet<T>& data, const std::vector<std::size_t>& idx,
                            const nc::ParamStore<T>& store, const model::ModelConfig& cfg) {
  std::vector<std::vector<Label>> y;
  for (auto i : idx) y.push_back(data.labels[i]);
  return eval::evaluate_tasks(predict(data, idx, store, cfg), y, data.tasks, data.kind);
}

/// NaN when no task could be scored.
inline double headline(const eval::MetricReport& r) {
  return r.aggregate ? *r.aggregate : std::numeric_limits<double>::quiet_NaN();
}

/// a strictly better than b; an undefined value is worse than anything.
inline bool better(double a, double b, TaskKind kind) {
  if (std::isnan(a)) return false;
  if (std::isnan(b)) return true;
  return kind == TaskKind::classification ? a > b : a < b;
}

struct TrainOptions {
  int epochs = 50;
  int batch_size = 32;
  double lr = 3e-5;
  double weight_decay = 0.0;
  double warmup_frac = 0.05;
  bool freeze_encoder = false;
  std::uint64_t seed = 0;
};

/// Trains `store` in place on `train`. on_epoch(epoch, mean batch loss)
/// returning false stops early.
template <std::floating_point T>
void train_supervised(nc::ParamStore<T>& store, const LabeledSet<T>& data, const std::vector<std::size_t>& train,
                      const model::ModelConfig& cfg, const TrainOptions& opt,
                      const std::function<bool(int, double)>& on_epoch = {}) {
  if (train.empty()) throw DatasetTooSmall("empty training split");
  const auto B = static_cast<std::size_t>(opt.batch_size);
  const auto per_epoch = static_cast<std::int64_t>((train.size() + B - 1) / B);
  nc::OptimizerConfig oc;
  oc.peak_lr = opt.lr;
  oc.weight_decay = opt.weight_decay;
  oc.warmup_frac = opt.warmup_frac;
  oc.total_steps = std::max<std::int64_t>(1, per_epoch * opt.epochs);
  const auto filter = trainable_filter(opt.freeze_encoder);
  std::int64_t step = 0;
  for (int e = 0; e < opt.epochs; ++e) {
    auto order = train;
    nc::Rng rng(nc::mix_keys(nc::mix_keys(opt.seed, nc::fnv1a64("finetune-epoch")), static_cast<std::uint64_t>(e)));
    rng.shuffle(order);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += B) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), lo + B)));
      std::vector<std::vector<Label>> y;
      for (auto i : idx) y.push_back(data.labels[i]);
      bool any = false;
      for (const auto& row : y)
        for (const auto& l : row) any = any || l.has_value();
      ++step;
      if (!any) continue;  // a batch with nothing observed carries no signal
      auto ctx = model::training_context(cfg.dropout, opt.seed, static_cast<std::uint64_t>(step));
      const auto loss = finetune_loss(batch_outputs(data, idx, store, cfg, ctx), y, data.kind);
      const double v = loss.item();
      if (!std::isfinite(v)) throw NonFiniteLoss("fine-tuning loss is not finite at step " + std::to_string(step));
      nc::backward(loss);
      nc::adam_step(store, oc, step, filter);
      total += v;
      ++batches;
    }
    if (on_epoch && !on_epoch(e, batches ? total / double(batches) : 0.0)) break;
  }
}

struct GridPointResult {
  double lr = 0.0;
  double weight_decay = 0.0;
  std::vector<double> train_loss;
  std::vector<double> val_curve;
  std::vector<double> test_curve;
  int best_epoch = -1;
  double best_val = std::numeric_limits<double>::quiet_NaN();
  double test_metric = std::numeric_limits<double>::quiet_NaN();

  json to_json() const {
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    json vc = json::array(), tc = json::array();
    for (double v : val_curve) vc.push_back(num(v));
    for (double v : test_curve) tc.push_back(num(v));
    return {{"lr", lr},           {"weight_decay", weight_decay}, {"train_loss", train_loss},
            {"val_curve", vc},    {"test_curve", tc},             {"best_epoch", best_epoch},
            {"best_val", num(best_val)}, {"test_metric", num(test_metric)}};
  }
};

/// First epoch with the best validation value; ties keep the earlier epoch.
inline int select_epoch(const std::vector<double>& val_curve, TaskKind kind) {
  int best = -1;
  for (int e = 0; e < static_cast<int>(val_curve.size()); ++e)
    if (best < 0 ? !std::isnan(val_curve[static_cast<std::size_t>(e)])
                 : better(val_curve[static_cast<std::size_t>(e)], val_curve[static_cast<std::size_t>(best)], kind))
      best = e;
  return best;
}

template <std::floating_point T>
struct SeedResult {
  std::uint64_t seed = 0;
  SplitAssignment split;
  std::vector<GridPointResult> grid;
  std::size_t best_point = 0;
  nc::ParamStore<T> best_store;  // parameters at the selected epoch of the selected grid point
};

template <std::floating_point T>
struct FinetuneResult {
  TaskKind kind = TaskKind::classification;
  std::vector<SeedResult<T>> seeds;
  eval::MeanStd aggregate;  // over seeds whose test metric is defined
  std::size_t scored = 0;
  std::size_t trainable_params = 0;

  json to_json() const {
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    json runs = json::array();
    for (const auto& s : seeds) {
      json grid = json::array();
      for (const auto& g : s.grid) grid.push_back(g.to_json());
      const auto& b = s.grid[s.best_point];
      runs.push_back({{"seed", s.seed},
                      {"split", {{"train", s.split.train.size()}, {"valid", s.split.valid.size()},
                                 {"test", s.split.test.size()}}},
                      {"grid", grid},
                      {"best", {{"lr", b.lr}, {"weight_decay", b.weight_decay}, {"best_epoch", b.best_epoch},
                                {"best_val", std::isnan(b.best_val) ? json(nullptr) : json(b.best_val)},
                                {"test_metric", std::isnan(b.test_metric) ? json(nullptr) : json(b.test_metric)}}}});
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f (%.3f)", aggregate.mean, aggregate.std);
    return {{"metric", kind == TaskKind::classification ? "auroc" : "rmse"},
            {"runs", runs},
            {"trainable_params", trainable_params},
            {"aggregate",
             {{"mean", num(aggregate.mean)}, {"std", num(aggregate.std)}, {"seeds_scored", scored}, {"summary", buf}}}};
  }
};

/// `base` holds pre-trained parameters (possibly including the 3-D side, which
/// is carried along untouched); 2-D encoder parameters missing from it are
/// freshly initialised from the seed. A new prediction head is created per
/// grid point.
template <std::floating_point T>
FinetuneResult<T> finetune_run(const nc::ParamStore<T>& base, const LabeledSet<T>& data, const molio::DatasetMeta& meta,
                               const model::ModelConfig& cfg, const FinetuneConfig& fc,
                               const Splitter& splitter = random_split,
                               const std::function<void(const std::string&)>& progress = {}) {
  fc.validate();
  cfg.validate();
  FinetuneResult<T> res;
  res.kind = data.kind;
  std::vector<double> tests;
  const std::array<double, 3> ratios{fc.train_frac, fc.valid_frac, fc.test_frac};
  for (auto seed : fc.seeds) {
    SeedResult<T> sr;
    sr.seed = seed;
    sr.split = splitter(data.size(), ratios, seed);
    bool have_best = false;
    double best_val = std::numeric_limits<double>::quiet_NaN();
    std::size_t point = 0;
    for (double lr : fc.lr_grid) {
      for (double wd : fc.weight_decay_grid) {
        auto store = base.clone();
        store.optimizer_state().clear();
        nc::ParamStore<T> fresh;
        model::register_encoder_params(fresh, lg::Modality::d2, meta, cfg, seed);
        for (const auto& [name, t] : fresh)
          if (!store.contains(name)) store.put(name, t.detach());
        const auto head_seed = nc::mix_keys(seed, point);
        nc::ParamStore<T> head;
        model::register_prediction_head(head, cfg, static_cast<int>(data.tasks), head_seed);
        for (const auto& [name, t] : head) store.put(name, t.detach());
        if (res.trainable_params == 0) res.trainable_params = store.element_count(trainable_filter(fc.freeze_encoder));

        GridPointResult g;
        g.lr = lr;
        g.weight_decay = wd;
        TrainOptions opt;
        opt.epochs = fc.epochs;
        opt.batch_size = fc.batch_size;
        opt.lr = lr;
        opt.weight_decay = wd;
        opt.warmup_frac = fc.warmup_frac;
        opt.freeze_encoder = fc.freeze_encoder;
        opt.seed = nc::mix_keys(seed, point);
        nc::ParamStore<T> snapshot;
        train_supervised(store, data, sr.split.train, cfg, opt, [&](int e, double loss) {
          g.train_loss.push_back(loss);
          const double v = sr.split.valid.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                  : headline(evaluate(data, sr.split.valid, store, cfg));
          const double t = sr.split.test.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                 : headline(evaluate(data, sr.split.test, store, cfg));
          g.val_curve.push_back(v);
          g.test_curve.push_back(t);
          if (select_epoch(g.val_curve, data.kind) == e) snapshot = store.clone();
          return true;
        });
        g.best_epoch = select_epoch(g.val_curve, data.kind);
        if (g.best_epoch < 0) {  // validation never defined: fall back to the last epoch
          g.best_epoch = static_cast<int>(g.val_curve.size()) - 1;
          snapshot = store.clone();
        }
        g.best_val = g.val_curve[static_cast<std::size_t>(g.best_epoch)];
        g.test_metric = g.test_curve[static_cast<std::size_t>(g.best_epoch)];
        if (!have_best || better(g.best_val, best_val, data.kind)) {
          have_best = true;
          best_val = g.best_val;
          sr.best_point = sr.grid.size();
          sr.best_store = std::move(snapshot);
        }
        if (progress) {
          char buf[160];
          std::snprintf(buf, sizeof buf, "seed %llu lr %.1e wd %.1e: best epoch %d val %.4f test %.4f",
                        static_cast<unsigned long long>(seed), lr, wd, g.best_epoch, g.best_val, g.test_metric);
          progress(buf);
        }
        sr.grid.push_back(std::move(g));
        ++point;
      }
    }
    const double m = sr.grid[sr.best_point].test_metric;
    if (!std::isnan(m)) tests.push_back(m);  // a test fold lacking a class has no AUROC
    res.seeds.push_back(std::move(sr));
  }
  res.scored = tests.size();
  res.aggregate = eval::mean_std(tests);
  if (tests.empty()) res.aggregate = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  return res;
}

}  // namespace galformer::finetune
