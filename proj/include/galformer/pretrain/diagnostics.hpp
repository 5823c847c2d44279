#pragma once

// Post-hoc probes of a pre-trained store, all in evaluation mode (no dropout).

#include <map>
#include <vector>

#include "galformer/pretrain/trainer.hpp"

namespace galformer::pretrain {

struct MaskProbe {
  double pair_accuracy_2d = 0.0;
  double pair_accuracy_3d = 0.0;
  double majority_baseline_2d = 0.0;  // always predicting the corpus-majority pair class
  double majority_baseline_3d = 0.0;
  std::size_t positions_2d = 0;
  std::size_t positions_3d = 0;
};

template <std::floating_point T>
MaskProbe probe_masked_prediction(const std::vector<model::PreparedMolecule<T>>& mols, const nc::ParamStore<T>& store,
                                  const model::ModelConfig& cfg, double ratio, std::uint64_t seed,
                                  int rounds = 1) {
  nc::NoGradGuard ng;
  std::map<int, std::size_t> freq;
  for (const auto& m : mols)
    for (const auto& t : m.d2.graph.node_target) ++freq[t.pair_class];
  int majority = 0;
  std::size_t best = 0;
  for (const auto& [c, n] : freq)
    if (n > best) best = n, majority = c;

  MaskProbe p;
  double hit2 = 0, hit3 = 0, base2 = 0, base3 = 0;
  nc::Rng rng(nc::mix_keys(seed, nc::fnv1a64("probe")));
  model::ForwardContext eval;
  auto score = [&](const MaskedView<T>& v, const lg::LineGraph& g, Modality m, double& hit, double& base,
                   std::size_t& count) {
    std::vector<std::size_t> target;
    for (auto i : v.plan.selected) target.push_back(static_cast<std::size_t>(g.node_target[i].pair_class));
    const auto& pre = mask_head_prefix(m);
    const auto states = nc::index_rows(v.out.node_states, v.plan.selected);
    const auto h = nc::relu(nc::matmul(states, store.get(pre + "W_1")) + store.get(pre + "b_1"));
    const auto logits = nc::matmul(h, store.get(pre + "W_pair")) + store.get(pre + "b_pair");
    hit += static_cast<double>(mask_accuracy_count(logits, target));
    for (auto t : target) base += t == static_cast<std::size_t>(majority) ? 1.0 : 0.0;
    count += target.size();
  };
  for (int round = 0; round < rounds; ++round) {
    for (const auto& m : mols) {
      score(masked_forward_2d(m.d2, store, cfg, ratio, rng, eval), m.d2.graph, Modality::d2, hit2, base2,
            p.positions_2d);
      if (m.d3)
        score(masked_forward_3d(*m.d3, store, cfg, ratio, rng, eval), m.d3->graph, Modality::d3, hit3, base3,
              p.positions_3d);
    }
  }
  if (p.positions_2d) {
    p.pair_accuracy_2d = hit2 / double(p.positions_2d);
    p.majority_baseline_2d = base2 / double(p.positions_2d);
  }
  if (p.positions_3d) {
    p.pair_accuracy_3d = hit3 / double(p.positions_3d);
    p.majority_baseline_3d = base3 / double(p.positions_3d);
  }
  return p;
}

struct RetrievalProbe {
  double top1_2d_to_3d = 0.0;
  double mean_positive = 0.0;  // mean z2d_i . z3d_i
  double mean_negative = 0.0;  // mean z2d_i . z3d_j, i != j, within a block
  std::size_t queries = 0;
};

/// Consecutive blocks of `block` molecules act as the candidate pool, using
/// unmasked views.
template <std::floating_point T>
RetrievalProbe probe_retrieval(const std::vector<model::PreparedMolecule<T>>& mols, const nc::ParamStore<T>& store,
                               const model::ModelConfig& cfg, std::size_t block) {
  nc::NoGradGuard ng;
  RetrievalProbe r;
  model::ForwardContext eval;
  double hits = 0, pos = 0, neg = 0;
  std::size_t npos = 0, nneg = 0;
  for (std::size_t lo = 0; lo + block <= mols.size(); lo += block) {
    std::vector<nc::Tensor<T>> g2, g3;
    for (std::size_t i = lo; i < lo + block; ++i) {
      g2.push_back(model::forward_2d(mols[i].d2, store, cfg, eval).graph_embedding);
      g3.push_back(model::forward_3d(*mols[i].d3, store, cfg, eval).graph_embedding);
    }
    using Span = std::span<const nc::Tensor<T>>;
    const auto z2 = model::projection_head(nc::concat_rows(Span(g2)), store, Modality::d2);
    const auto z3 = model::projection_head(nc::concat_rows(Span(g3)), store, Modality::d3);
    const auto s = nc::matmul(z2, nc::transpose(z3));
    for (std::size_t i = 0; i < block; ++i) {
      std::size_t arg = 0;
      for (std::size_t j = 0; j < block; ++j) {
        if (s(i, j) > s(i, arg)) arg = j;
        if (i == j) pos += s(i, j), ++npos;
        else neg += s(i, j), ++nneg;
      }
      hits += arg == i ? 1.0 : 0.0;
      ++r.queries;
    }
  }
  if (r.queries) r.top1_2d_to_3d = hits / double(r.queries);
  if (npos) r.mean_positive = pos / double(npos);
  if (nneg) r.mean_negative = neg / double(nneg);
  return r;
}

}  // namespace galformer::pretrain
