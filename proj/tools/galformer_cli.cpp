// galformer: generate toy corpora, inspect molecules, pre-train, fine-tune,
// score prediction files and run the gradient checks.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "galformer/app/gradcheck_suite.hpp"
#include "galformer/app/run.hpp"
#include "galformer/eval/metrics.hpp"
#include "galformer/finetune/finetune.hpp"
#include "galformer/molio/dataset.hpp"
#include "galformer/molio/toy.hpp"
#include "galformer/pretrain/checkpoint.hpp"
#include "galformer/pretrain/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace galformer;

namespace {

constexpr int kExitUsage = 1, kExitData = 2, kExitNumerical = 3;

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string data, data_3d, out, resume, checkpoint;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string precision = "f32";
  std::vector<std::string> argv;
};

void add_run_flags(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON config (flat dotted keys or nested sections, or a run manifest)");
  sub->add_option("--set", c.sets, "override one config key, e.g. --set model.layers=3 (repeatable)");
  sub->add_option("--seed", c.seed, "seed; overrides the config");
  sub->add_option("--threads", c.threads, "workers for encoding precomputation; 1 is bitwise deterministic")
      ->check(CLI::PositiveNumber);
  sub->add_option("--precision", c.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
}

void refuse_overwrite(const fs::path& out, const std::vector<std::string>& inputs) {
  for (const auto& in : inputs)
    if (!in.empty() && fs::exists(out) && fs::exists(in) && fs::equivalent(out, in))
      throw ConfigError("refusing to overwrite input file " + in);
}

molio::Dataset load_data(const Common& c, bool need_3d) {
  if (c.data.empty()) throw ConfigError("--data is required");
  if (!c.data_3d.empty()) {
    auto ds = molio::parse_dataset(c.data, false, c.threads);
    if (need_3d) molio::attach_conformers(ds, c.data_3d);
    return ds;
  }
  return molio::parse_dataset(c.data, need_3d, c.threads);
}

void write_json(const fs::path& p, const json& j) { app::write_atomic(p, j.dump(2) + "\n"); }

// ------------------------------------------------------------------ gen-toy

struct ToyArgs {
  int n = 64;
  std::uint64_t seed = 0;
  std::string kind = "mixed", task_kind = "classification", out, coords_out;
  int tasks = 1;
  double missing = 0.0;
};

int cmd_gen_toy(const ToyArgs& a) {
  if (a.out.empty()) throw ConfigError("--out is required");
  molio::ToyOptions o;
  o.tasks = a.tasks;
  o.missing_label_frac = a.missing;
  if (a.task_kind == "classification") o.task_kind = molio::TaskKind::classification;
  else if (a.task_kind == "regression") o.task_kind = molio::TaskKind::regression;
  else throw ConfigError("--task-kind must be classification or regression");
  auto ds = molio::generate_toy_corpus(a.n, a.seed, molio::toy_kind_from_string(a.kind), o);
  if (!a.coords_out.empty()) {
    std::string lines;
    for (auto& r : ds.records) {
      json coords = json::array();
      for (const auto& p : r.g3d->coords) coords.push_back({p[0], p[1], p[2]});
      lines += json{{"id", r.g2d.id}, {"coords", coords}}.dump() + "\n";
      r.g3d.reset();
    }
    app::write_atomic(a.coords_out, lines);
  }
  molio::write_dataset(ds, a.out);
  // read back through the validating parser
  const auto check = molio::parse_dataset(a.out, a.coords_out.empty());
  std::fprintf(stderr, "wrote %zu molecules to %s\n", check.records.size(), a.out.c_str());
  return 0;
}

// ------------------------------------------------------------------ inspect

json line_graph_json(const lg::LineGraph& g) {
  json nodes = json::array(), edges = json::array();
  for (std::size_t i = 0; i < g.n_nodes(); ++i)
    nodes.push_back({{"index", i},
                     {"origin", {g.node_origin[i].first, g.node_origin[i].second}},
                     {"pair_class", g.node_target[i].pair_class},
                     {"bond_type", g.node_target[i].bond_type}});
  for (const auto& e : g.edges) edges.push_back({{"i", e.i}, {"j", e.j}, {"shared_atom", e.shared_atom}});
  return {{"nodes", nodes}, {"edges", edges}, {"adjacency", g.neighbours()}, {"virtual_node", g.virtual_node()}};
}

int cmd_inspect(const Common& c, const std::string& id) {
  auto rc = app::load_run_config(c.config, c.sets);
  rc.model.validate();
  molio::Dataset ds;
  if (c.data_3d.empty()) {
    try {
      ds = molio::parse_dataset(c.data, true, c.threads);  // keep inline coordinates when every record has them
    } catch (const MissingConformer&) {
      ds = molio::parse_dataset(c.data, false, c.threads);
    }
  } else {
    ds = molio::parse_dataset(c.data, false, c.threads);
  }
  const molio::MolRecord* rec = nullptr;
  for (const auto& r : ds.records)
    if (r.g2d.id == id) rec = &r;
  if (!rec) throw IndexOutOfRange("no molecule with id '" + id + "'");
  if (!c.data_3d.empty()) {
    molio::Dataset one;
    one.meta = ds.meta;
    one.records.push_back(*rec);
    molio::attach_conformers(one, c.data_3d);
    ds = std::move(one);
    rec = &ds.records.front();
  }
  const auto p = model::prepare_molecule<double>(*rec, ds.meta, rc.model, rec->g3d.has_value());
  const auto& s = p.d2.structure;
  json spd = json::array();
  for (std::size_t i = 0; i < s.V(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < s.V(); ++j) row.push_back(s.spt.len(i, j));
    spd.push_back(row);
  }
  json pe = json::array();
  for (std::size_t i = 0; i < s.pe.n; ++i)
    pe.push_back(std::vector<double>(s.pe.vectors.begin() + static_cast<std::ptrdiff_t>(i * s.pe.k),
                                     s.pe.vectors.begin() + static_cast<std::ptrdiff_t>((i + 1) * s.pe.k)));
  json out = {{"id", rec->g2d.id},
              {"atoms", rec->g2d.atom_count()},
              {"line_graph", line_graph_json(p.d2.graph)},
              {"encoding",
               {{"shortest_path_lengths", spd},
                {"laplacian_eigenvalues", s.pe.eigenvalues},
                {"positional_encoding", pe}}},
              {"has_conformer", p.d3.has_value()}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ------------------------------------------------------------------ pretrain

template <std::floating_point T>
int cmd_pretrain(const Common& c) {
  auto rc = app::load_run_config(c.config, c.sets);
  if (c.seed) rc.pretrain.seed = *c.seed;
  rc.validate();
  if (c.out.empty()) throw ConfigError("--out is required");
  fs::create_directories(c.out);
  app::RunManifest man(c.out, "pretrain", c.argv, rc.to_json(), rc.pretrain.seed);
  man.extra()["precision"] = c.precision;
  man.extra()["threads"] = c.threads;
  man.add_dataset("data", c.data);
  if (!c.data_3d.empty()) man.add_dataset("data_3d", c.data_3d);
  if (!c.resume.empty()) man.extra()["resumed_from"] = c.resume;
  man.write();
  try {
    const auto ds = load_data(c, true);
    auto mols = app::prepare_all<T>(ds, rc.model, true, c.threads);
    man.phase("prepare", man.elapsed());
    pretrain::Pretrainer<T> tr(mols, ds.meta, rc.model, rc.pretrain, rc.optimizer);
    if (!c.resume.empty()) tr.restore(pretrain::load_checkpoint<T>(c.resume));
    std::fprintf(stderr, "pre-training %zu molecules, %lld steps\n", mols.size(),
                 static_cast<long long>(tr.total_steps()));
    pretrain::pretrain_loop(tr, c.out, [&](const pretrain::StepTelemetry& t) {
      if (t.step % rc.pretrain.log_every == 0 || tr.done())
        std::fprintf(stderr, "step %lld loss %.5f (m2d %.4f m3d %.4f cl %.4f) lr %.2e\n",
                     static_cast<long long>(t.step), t.loss, t.mask_2d, t.mask_3d, t.contrastive, t.lr);
    });
    man.extra()["final_step"] = tr.step();
    man.finish("ok");
  } catch (const std::exception& e) {
    man.finish(std::string("failed: ") + e.what());
    throw;
  }
  return 0;
}

// ------------------------------------------------------------------ finetune

template <std::floating_point T>
int cmd_finetune(Common c) {
  auto rc = app::load_run_config(c.config, c.sets);
  if (c.seed) rc.finetune.seeds = {*c.seed};
  std::optional<pretrain::Checkpoint<T>> ck;
  if (!c.checkpoint.empty()) {
    ck = pretrain::load_checkpoint<T>(c.checkpoint);
    const auto& h = ck->header;
    if (h.contains("config") && h["config"].contains("model")) {
      // the encoder shape is fixed by the checkpoint
      rc.model = io::config_from_json<model::ModelConfig>(h["config"]["model"], "checkpoint.model");
      for (const auto& s : c.sets)
        if (s.rfind("model.", 0) == 0 && s.rfind("model.dropout=", 0) != 0)
          throw ConfigError("--set " + s + " conflicts with the pre-trained checkpoint's model");
    }
  }
  rc.validate();
  if (c.out.empty()) throw ConfigError("--out is required");
  fs::create_directories(c.out);
  app::RunManifest man(c.out, "finetune", c.argv, rc.to_json(),
                       rc.finetune.seeds.empty() ? 0 : rc.finetune.seeds.front());
  man.extra()["precision"] = c.precision;
  man.add_dataset("data", c.data);
  if (!c.checkpoint.empty()) man.add_dataset("checkpoint", c.checkpoint);
  man.write();
  try {
    c.data_3d.clear();
    const auto ds = load_data(c, false);
    if (ck && ck->header.contains("config") && ck->header["config"].contains("meta")) {
      const auto m = molio::meta_from_json(ck->header["config"]["meta"]);
      if (m.theta_v != ds.meta.theta_v || m.theta_e != ds.meta.theta_e || m.theta_t != ds.meta.theta_t)
        throw DimensionMismatch("dataset vocabulary sizes differ from the checkpoint's");
    }
    const auto mols = app::prepare_all<T>(ds, rc.model, false, c.threads);
    const auto data = finetune::labeled_set(mols, ds);
    man.phase("prepare", man.elapsed());
    const nc::ParamStore<T> empty;
    const auto res = finetune::finetune_run(ck ? ck->store : empty, data, ds.meta, rc.model, rc.finetune,
                                            finetune::random_split,
                                            [](const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); });
    write_json(fs::path(c.out) / "results.json", res.to_json());
    std::string lines;
    for (const auto& s : res.seeds) {
      const auto pred = finetune::predict(data, s.split.test, s.best_store, rc.model);
      for (std::size_t k = 0; k < s.split.test.size(); ++k) {
        const auto i = s.split.test[k];
        json label = json::array();
        for (const auto& l : data.labels[i]) label.push_back(l ? json(*l) : json(nullptr));
        lines += json{{"seed", s.seed},
                      {"id", mols[i].id},
                      {"pred", std::vector<double>(pred.begin() + static_cast<std::ptrdiff_t>(k * data.tasks),
                                                   pred.begin() + static_cast<std::ptrdiff_t>((k + 1) * data.tasks))},
                      {"label", label}}
                     .dump() +
                 "\n";
      }
    }
    app::write_atomic(fs::path(c.out) / "predictions.jsonl", lines);
    const auto j = res.to_json();
    std::fprintf(stderr, "%s %s over %zu seeds\n", j["metric"].template get<std::string>().c_str(),
                 j["aggregate"]["summary"].template get<std::string>().c_str(), res.seeds.size());
    man.finish("ok");
  } catch (const std::exception& e) {
    man.finish(std::string("failed: ") + e.what());
    throw;
  }
  return 0;
}

// ------------------------------------------------------------------ eval

int cmd_eval(const std::string& predictions, const std::string& embeddings, const std::string& kind_s,
             const std::string& out) {
  if (predictions.empty() == embeddings.empty()) throw ConfigError("give exactly one of --predictions or --embeddings");
  json result;
  if (!embeddings.empty()) {
    std::vector<double> pts;
    std::vector<int> labels;
    std::size_t d = 0;
    const auto lines = molio::detail::read_lines(embeddings);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (molio::detail::blank(lines[i])) continue;
      json j;
      try {
        j = json::parse(lines[i]);
      } catch (const json::exception& e) {
        throw MalformedRecord(i + 1, e.what());
      }
      const auto v = molio::detail::real_array(j.value("embedding", json()), i + 1, "embedding");
      if (d == 0) d = v.size();
      if (v.size() != d || d == 0) throw MalformedRecord(i + 1, "embedding width differs");
      pts.insert(pts.end(), v.begin(), v.end());
      labels.push_back(molio::detail::int_field(j, "cluster", i + 1));
    }
    result = {{"metric", "davies_bouldin"}, {"value", eval::davies_bouldin(pts, d, labels)}, {"points", labels.size()}};
  } else {
    molio::TaskKind kind;
    if (kind_s == "classification") kind = molio::TaskKind::classification;
    else if (kind_s == "regression") kind = molio::TaskKind::regression;
    else throw ConfigError("--task-kind must be classification or regression");
    struct Rows {
      std::vector<double> pred;
      std::vector<std::vector<eval::Label>> labels;
    };
    std::map<std::uint64_t, Rows> by_seed;
    std::size_t tasks = 0;
    const auto lines = molio::detail::read_lines(predictions);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (molio::detail::blank(lines[i])) continue;
      json j;
      try {
        j = json::parse(lines[i]);
      } catch (const json::exception& e) {
        throw MalformedRecord(i + 1, e.what());
      }
      if (!j.is_object() || !j.contains("pred") || !j.contains("label"))
        throw MalformedRecord(i + 1, "prediction record needs 'pred' and 'label'");
      const auto p = molio::detail::real_array(j["pred"], i + 1, "pred");
      if (!j["label"].is_array() || j["label"].size() != p.size())
        throw MalformedRecord(i + 1, "'label' must be an array as wide as 'pred'");
      if (tasks == 0) tasks = p.size();
      if (p.size() != tasks || tasks == 0) throw MalformedRecord(i + 1, "task count differs between lines");
      std::vector<eval::Label> l;
      for (const auto& v : j["label"]) {
        if (v.is_null()) l.emplace_back(std::nullopt);
        else if (v.is_number()) l.emplace_back(v.get<double>());
        else throw MalformedRecord(i + 1, "labels must be numbers or null");
      }
      auto& rows = by_seed[j.value("seed", std::uint64_t{0})];
      rows.pred.insert(rows.pred.end(), p.begin(), p.end());
      rows.labels.push_back(std::move(l));
    }
    if (by_seed.empty()) throw MalformedRecord(0, "no predictions");
    json runs = json::array();
    std::vector<double> values;
    const char* name = "";
    for (const auto& [seed, rows] : by_seed) {
      const auto r = eval::evaluate_tasks(rows.pred, rows.labels, tasks, kind);
      name = r.metric_name();
      json per = json::array();
      for (const auto& v : r.per_task) per.push_back(v ? json(*v) : json(nullptr));
      runs.push_back({{"seed", seed},
                      {"per_task", per},
                      {"skipped_tasks", r.skipped},
                      {"aggregate", r.aggregate ? json(*r.aggregate) : json(nullptr)}});
      if (r.aggregate) values.push_back(*r.aggregate);
    }
    const auto ms = eval::mean_std(values);
    result = {{"metric", name}, {"runs", runs}, {"aggregate", {{"mean", ms.mean}, {"std", ms.std}}}};
    if (values.empty()) result["aggregate"] = nullptr;
  }
  if (!out.empty()) write_json(out, result);
  std::cout << result.dump(2) << "\n";
  return 0;
}

// ------------------------------------------------------------------ gradcheck

template <std::floating_point T>
int cmd_gradcheck(const std::string& out) {
  const auto cases = app::run_gradcheck_suite<T>();
  bool ok = true;
  json j = json::array();
  for (const auto& c : cases) {
    std::printf("%-14s max relative error %.3e over %zu entries (worst %s[%zu]) tolerance %.0e %s\n", c.name.c_str(),
                c.result.max_rel_error, c.result.checked, c.result.worst_param.c_str(), c.result.worst_index,
                c.tolerance, c.pass() ? "ok" : "FAIL");
    ok = ok && c.pass();
    j.push_back({{"case", c.name},
                 {"max_rel_error", c.result.max_rel_error},
                 {"checked", c.result.checked},
                 {"worst_param", c.result.worst_param},
                 {"tolerance", c.tolerance},
                 {"pass", c.pass()}});
  }
  if (!out.empty()) write_json(out, j);
  return ok ? 0 : kExitNumerical;
}

template <class F>
int dispatch(const std::string& precision, F&& f) {
  return precision == "f64" ? f(double{}) : f(float{});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"galformer: dual-modality line-graph transformer for molecules"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(app::kVersion));

  Common c;
  for (int i = 0; i < argc; ++i) c.argv.emplace_back(argv[i]);

  ToyArgs toy;
  auto* gen = app.add_subcommand("gen-toy", "write a synthetic JSONL corpus");
  gen->add_option("--n", toy.n, "molecule count")->check(CLI::PositiveNumber);
  gen->add_option("--seed", toy.seed, "seed");
  gen->add_option("--kind", toy.kind, "trees, rings or mixed")->check(CLI::IsMember({"trees", "rings", "mixed"}));
  gen->add_option("--tasks", toy.tasks, "label tasks per molecule")->check(CLI::NonNegativeNumber);
  gen->add_option("--task-kind", toy.task_kind, "classification or regression");
  gen->add_option("--missing", toy.missing, "fraction of labels left missing")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--out", toy.out, "output JSONL path")->required();
  gen->add_option("--coords-out", toy.coords_out, "write conformers to this separate file instead of inline");

  std::string id;
  auto* insp = app.add_subcommand("inspect", "dump one molecule's line graph and encodings as JSON");
  add_run_flags(insp, c);
  insp->add_option("--data", c.data, "JSONL corpus")->required();
  insp->add_option("--data-3d", c.data_3d, "conformer file joined by id");
  insp->add_option("--id", id, "molecule id")->required();

  auto* pre = app.add_subcommand("pretrain", "run joint masked/contrastive pre-training");
  add_run_flags(pre, c);
  pre->add_option("--data", c.data, "JSONL corpus with coordinates (or see --data-3d)")->required();
  pre->add_option("--data-3d", c.data_3d, "conformer file joined by id");
  pre->add_option("--out", c.out, "run directory")->required();
  pre->add_option("--resume", c.resume, "checkpoint to continue from");

  auto* fine = app.add_subcommand("finetune", "fine-tune the 2-D encoder on labelled data");
  add_run_flags(fine, c);
  fine->add_option("--data", c.data, "labelled JSONL corpus")->required();
  fine->add_option("--checkpoint", c.checkpoint, "pre-trained checkpoint (omit to train from scratch)");
  fine->add_option("--out", c.out, "run directory")->required();

  std::string preds, embeds, kind = "classification", eval_out;
  auto* ev = app.add_subcommand("eval", "recompute metrics from a predictions or embeddings file");
  ev->add_option("--predictions", preds, "JSONL with pred, label[, seed]");
  ev->add_option("--embeddings", embeds, "JSONL with embedding, cluster (Davies-Bouldin index)");
  ev->add_option("--task-kind", kind, "classification or regression");
  ev->add_option("--out", eval_out, "also write the metrics JSON here");

  std::string gc_out;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of all gradients");
  gc->add_option("--precision", c.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  gc->add_option("--out", gc_out, "also write the results JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) {
      refuse_overwrite(toy.out, {});
      return cmd_gen_toy(toy);
    }
    if (*insp) return cmd_inspect(c, id);
    if (*pre) {
      refuse_overwrite(c.out, {c.data, c.data_3d});
      return dispatch(c.precision, [&](auto t) { return cmd_pretrain<decltype(t)>(c); });
    }
    if (*fine) {
      refuse_overwrite(c.out, {c.data, c.checkpoint});
      return dispatch(c.precision, [&](auto t) { return cmd_finetune<decltype(t)>(c); });
    }
    if (*ev) {
      refuse_overwrite(eval_out, {preds, embeds});
      return cmd_eval(preds, embeds, kind, eval_out);
    }
    if (*gc) return dispatch(c.precision, [&](auto t) { return cmd_gradcheck<decltype(t)>(gc_out); });
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    switch (e.error_class()) {
      case ErrorClass::usage: return kExitUsage;
      case ErrorClass::data: return kExitData;
      case ErrorClass::numerical: return kExitNumerical;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
