#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "galformer/finetune/finetune.hpp"
#include "galformer/molio/toy.hpp"
#include "galformer/pretrain/trainer.hpp"

using namespace galformer;
using namespace galformer::finetune;
using model::ModelConfig;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.layers = 1;
  c.hidden = 8;
  c.heads = 2;
  c.ffn_mult = 2;
  c.dropout = 0.0;
  c.proj_dim = 6;
  c.pred_hidden = 16;
  c.pe_dim = 3;
  c.kernels = 4;
  c.max_path = 4;
  c.path_dim = 2;
  return c;
}

template <class T>
struct Labeled {
  molio::Dataset ds;
  std::vector<model::PreparedMolecule<T>> mols;
  LabeledSet<T> set;
  Labeled(int n, std::uint64_t seed, const ModelConfig& cfg, molio::TaskKind kind, int tasks = 1,
          double missing = 0.0) {
    molio::ToyOptions o;
    o.tasks = tasks;
    o.task_kind = kind;
    o.missing_label_frac = missing;
    ds = molio::generate_toy_corpus(n, seed, molio::ToyKind::mixed, o);
    for (const auto& r : ds.records) mols.push_back(model::prepare_molecule<T>(r, ds.meta, cfg, true));
    set = labeled_set(mols, ds);
  }
};

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

TEST(Split, LargestRemainderSizes) {
  const std::array<double, 3> r{0.8, 0.1, 0.1};
  EXPECT_EQ(split_sizes(100, r), (std::array<std::size_t, 3>{80, 10, 10}));
  EXPECT_EQ(split_sizes(101, r), (std::array<std::size_t, 3>{81, 10, 10}));
  EXPECT_EQ(split_sizes(10, r), (std::array<std::size_t, 3>{8, 1, 1}));
  for (std::size_t n = 10; n < 300; ++n) {
    const auto s = split_sizes(n, r);
    ASSERT_EQ(s[0] + s[1] + s[2], n);
    for (int k = 0; k < 3; ++k) ASSERT_LE(std::abs(double(s[k]) - r[k] * double(n)), 1.0) << n;
  }
}

TEST(Split, PartitionDeterminismAndOverlap) {
  const std::array<double, 3> r{0.8, 0.1, 0.1};
  const auto a = random_split(100, r, 1), b = random_split(100, r, 1), c = random_split(100, r, 2);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.train, c.train);
  std::set<std::size_t> seen;
  for (const auto* part : {&a.train, &a.valid, &a.test})
    for (auto i : *part) EXPECT_TRUE(seen.insert(i).second);
  EXPECT_EQ(seen.size(), 100u);
  // two independent random 80-subsets of 100 share 64 on average
  double overlap = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto x = random_split(100, r, 1000 + s), y = random_split(100, r, 5000 + s);
    std::set<std::size_t> tx(x.train.begin(), x.train.end());
    for (auto i : y.train) overlap += tx.count(i);
  }
  EXPECT_NEAR(overlap / 200.0, 64.0, 1.0);
  EXPECT_THROW(random_split(9, r, 0), DatasetTooSmall);
}

TEST(FinetuneLoss, HandCases) {
  using L = std::vector<std::vector<Label>>;
  const auto zeros = nc::Tensor<double>::zeros(2, 2);
  EXPECT_NEAR(finetune_loss(zeros, L{{1.0, 1.0}, {1.0, 1.0}}, TaskKind::classification).item(), std::log(2.0), 1e-15);
  const auto p = nc::Tensor<double>::from(2, 1, {3, 4});
  EXPECT_EQ(finetune_loss(p, L{{3.0}, {4.0}}, TaskKind::regression).item(), 0.0);
  const auto z = nc::Tensor<double>::zeros(2, 1);
  EXPECT_NEAR(finetune_loss(z, L{{3.0}, {4.0}}, TaskKind::regression).item(), 3.53553, 1e-5);
  EXPECT_THROW(finetune_loss(z, L{{std::nullopt}, {std::nullopt}}, TaskKind::regression), AllLabelsMissing);
  EXPECT_THROW(finetune_loss(z, L{{1.0}}, TaskKind::regression), ShapeMismatch);
}

TEST(FinetuneLoss, MaskSemanticsAgainstDirectFormula) {
  nc::Rng rng(4);
  std::vector<double> x(12);
  for (auto& v : x) v = rng.uniform(-3, 3);
  const auto out = nc::Tensor<double>::from(4, 3, x);
  std::vector<std::vector<Label>> full(4, std::vector<Label>(3)), part = full;
  double bce_full = 0, bce_part = 0, se_part = 0;
  int n_part = 0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t t = 0; t < 3; ++t) {
      const double y = rng.bernoulli(0.5) ? 1.0 : 0.0;
      const double xi = x[i * 3 + t];
      const double l = std::log1p(std::exp(-std::abs(xi))) + std::max(xi, 0.0) - xi * y;
      full[i][t] = y;
      bce_full += l;
      if ((i + t) % 3) {
        part[i][t] = y;
        bce_part += l;
        se_part += (xi - y) * (xi - y);
        ++n_part;
      }
    }
  EXPECT_NEAR(finetune_loss(out, full, TaskKind::classification).item(), bce_full / 12.0, 1e-14);
  EXPECT_NEAR(finetune_loss(out, part, TaskKind::classification).item(), bce_part / n_part, 1e-14);
  EXPECT_NEAR(finetune_loss(out, part, TaskKind::regression).item(), std::sqrt(se_part / n_part), 1e-14);

  auto v = nc::Tensor<double>::from(4, 3, x, true);
  for (auto kind : {TaskKind::classification, TaskKind::regression}) {
    const auto r = nc::check_gradients<double>([&] { return finetune_loss(v, part, kind); }, {{"x", v}}, 1e-5, 1e-6);
    EXPECT_LT(r.max_rel_error, 1e-7);
  }
}

TEST(Selection, EarliestBestEpoch) {
  EXPECT_EQ(select_epoch({0.5, 0.7, 0.7, 0.6}, TaskKind::classification), 1);
  EXPECT_EQ(select_epoch({0.3, 0.2, 0.2, 0.25}, TaskKind::regression), 1);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(select_epoch({nan, 0.6, nan, 0.6}, TaskKind::classification), 1);
  EXPECT_EQ(select_epoch({nan, nan}, TaskKind::classification), -1);
}

TEST(Finetune, FrozenEncoderCountAndBehaviour) {
  const auto cfg = tiny_config();
  Labeled<double> d(12, 3, cfg, TaskKind::classification);
  nc::ParamStore<double> store;
  model::register_encoder_params(store, lg::Modality::d2, d.ds.meta, cfg, 1);
  model::register_prediction_head(store, cfg, 1, 2);
  const auto encoder = store.element_count(is_encoder_param);
  EXPECT_GT(encoder, 0u);
  EXPECT_EQ(store.element_count(trainable_filter(false)) - store.element_count(trainable_filter(true)), encoder);

  const auto before = store.clone();
  TrainOptions opt;
  opt.epochs = 2;
  opt.batch_size = 4;
  opt.lr = 1e-2;
  opt.freeze_encoder = true;
  train_supervised(store, d.set, all_indices(12), cfg, opt);
  bool head_moved = false;
  for (const auto& [name, t] : store) {
    const auto& b = before.get(name);
    const bool same = std::memcmp(t.data().data(), b.data().data(), t.size() * sizeof(double)) == 0;
    if (is_encoder_param(name)) EXPECT_TRUE(same) << name;
    else head_moved = head_moved || !same;
  }
  EXPECT_TRUE(head_moved);
}

TEST(Finetune, RunLeavesThreeDParametersUntouchedAndAggregates) {
  const auto cfg = tiny_config();
  Labeled<float> d(60, 5, cfg, TaskKind::classification, 2, 0.1);
  nc::ParamStore<float> base;
  pretrain::register_pretrain_params(base, d.ds.meta, cfg, 9);
  FinetuneConfig fc;
  fc.lr_grid = {1e-3, 1e-4};
  fc.weight_decay_grid = {0.0};
  fc.epochs = 3;
  fc.batch_size = 8;
  fc.seeds = {0, 1};
  const auto res = finetune_run(base, d.set, d.ds.meta, cfg, fc);
  ASSERT_EQ(res.seeds.size(), 2u);
  std::vector<double> tests;
  for (const auto& s : res.seeds) {
    ASSERT_EQ(s.grid.size(), 2u);
    for (const auto& g : s.grid) {
      EXPECT_EQ(g.val_curve.size(), 3u);
      EXPECT_EQ(g.best_epoch, select_epoch(g.val_curve, TaskKind::classification));
    }
    for (const auto& [name, t] : base)
      if (name.rfind("3d.", 0) == 0) {
        const auto& u = s.best_store.get(name);
        ASSERT_EQ(std::memcmp(t.data().data(), u.data().data(), t.size() * sizeof(float)), 0) << name;
      }
    const double m = s.grid[s.best_point].test_metric;
    if (!std::isnan(m)) tests.push_back(m);
  }
  ASSERT_FALSE(tests.empty());
  const auto j = res.to_json();
  const auto ms = eval::mean_std(tests);
  EXPECT_EQ(j["aggregate"]["mean"].get<double>(), ms.mean);
  EXPECT_EQ(j["aggregate"]["std"].get<double>(), ms.std);
  EXPECT_EQ(j["aggregate"]["seeds_scored"].get<std::size_t>(), tests.size());
  EXPECT_EQ(j["metric"], "auroc");
  EXPECT_EQ(j["runs"][0]["grid"][0]["val_curve"].size(), 3u);
}

TEST(Finetune, SmallSetOverfits) {
  auto cfg = tiny_config();
  cfg.hidden = 16;
  Labeled<float> d(16, 7, cfg, TaskKind::regression);
  nc::ParamStore<float> store;
  model::register_encoder_params(store, lg::Modality::d2, d.ds.meta, cfg, 1);
  model::register_prediction_head(store, cfg, 1, 2);
  TrainOptions opt;
  opt.epochs = 300;
  opt.batch_size = 8;
  opt.lr = 3e-3;
  const auto all = all_indices(16);
  const double start = headline(evaluate(d.set, all, store, cfg));
  double err = start;
  train_supervised(store, d.set, all, cfg, opt, [&](int, double) {
    err = headline(evaluate(d.set, all, store, cfg));
    return err > 0.05;
  });
  EXPECT_GT(start, 0.2);
  EXPECT_LE(err, 0.05);
}
