#pragma once

// JSONL molecule datasets, one molecule per line:
//   {"id": str, "atoms": [{"t": int, "f": [theta_v reals]}...],
//    "bonds": [{"u": int, "v": int, "t": int, "f": [theta_e reals]}...],
//    "coords": [[x, y, z]...] (optional), "labels": [real|null...] (optional)}
// with a sidecar "<file>.meta.json":
//   {"theta_v", "theta_e", "theta_t", "tasks", "task_kind",
//    "atom_type_vocab" (optional), "bond_type_vocab" (optional)}

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "galformer/errors.hpp"
#include "galformer/molio/types.hpp"

namespace galformer::molio {

using json = nlohmann::json;

inline std::filesystem::path meta_path_for(const std::filesystem::path& data) {
  return std::filesystem::path(data.string() + ".meta.json");
}

inline const char* to_string(TaskKind k) {
  return k == TaskKind::classification ? "classification" : "regression";
}

inline json meta_to_json(const DatasetMeta& m) {
  return json{{"theta_v", m.theta_v},
              {"theta_e", m.theta_e},
              {"theta_t", m.theta_t},
              {"tasks", m.task_count},
              {"task_kind", to_string(m.task_kind)},
              {"atom_type_vocab", m.atom_type_vocab},
              {"bond_type_vocab", m.bond_type_vocab}};
}

inline DatasetMeta meta_from_json(const json& j) {
  DatasetMeta m;
  try {
    m.theta_v = j.at("theta_v").get<int>();
    m.theta_e = j.at("theta_e").get<int>();
    m.theta_t = j.at("theta_t").get<int>();
    m.task_count = j.value("tasks", 0);
    const std::string kind = j.value("task_kind", std::string("classification"));
    if (kind == "classification") m.task_kind = TaskKind::classification;
    else if (kind == "regression") m.task_kind = TaskKind::regression;
    else throw MalformedRecord(0, "meta: unknown task_kind '" + kind + "'");
    if (j.contains("atom_type_vocab")) m.atom_type_vocab = j["atom_type_vocab"].get<std::vector<std::string>>();
    if (j.contains("bond_type_vocab")) m.bond_type_vocab = j["bond_type_vocab"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw MalformedRecord(0, std::string("meta: ") + e.what());
  }
  if (m.theta_v < 1 || m.theta_e < 1 || m.theta_t < 1) throw MalformedRecord(0, "meta: widths must be >= 1");
  if (!m.atom_type_vocab.empty() && static_cast<int>(m.atom_type_vocab.size()) != m.theta_t)
    throw MalformedRecord(0, "meta: atom_type_vocab size differs from theta_t");
  return m;
}

inline json record_to_json(const MolRecord& r) {
  const auto& g = r.g2d;
  json atoms = json::array();
  for (std::size_t a = 0; a < g.atom_count(); ++a) {
    auto f = g.atom_feat(a);
    atoms.push_back(json{{"t", g.atom_types[a]}, {"f", std::vector<double>(f.begin(), f.end())}});
  }
  json bonds = json::array();
  for (const auto& b : g.bonds) bonds.push_back(json{{"u", b.u}, {"v", b.v}, {"t", b.type}, {"f", b.feats}});
  json out{{"id", g.id}, {"atoms", std::move(atoms)}, {"bonds", std::move(bonds)}};
  if (r.g3d) {
    json coords = json::array();
    for (const auto& c : r.g3d->coords) coords.push_back(json::array({c[0], c[1], c[2]}));
    out["coords"] = std::move(coords);
  }
  if (g.labels) {
    json labels = json::array();
    for (const auto& l : *g.labels) labels.push_back(l ? json(*l) : json(nullptr));
    out["labels"] = std::move(labels);
  }
  return out;
}

namespace detail {

inline std::vector<double> real_array(const json& j, std::size_t line, const char* what) {
  if (!j.is_array()) throw MalformedRecord(line, std::string(what) + " must be an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw MalformedRecord(line, std::string(what) + " must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

inline int int_field(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j[key].is_number_integer())
    throw MalformedRecord(line, std::string("missing integer field '") + key + "'");
  return j[key].get<int>();
}

}  // namespace detail

/// Parses and validates one record. `meta` supplies the declared widths.
inline MolRecord record_from_json(const json& j, std::size_t line, const DatasetMeta& meta) {
  if (!j.is_object()) throw MalformedRecord(line, "record must be a JSON object");
  if (!j.contains("id") || !j["id"].is_string()) throw MalformedRecord(line, "missing string field 'id'");
  if (!j.contains("atoms") || !j["atoms"].is_array()) throw MalformedRecord(line, "missing array 'atoms'");
  if (!j.contains("bonds") || !j["bonds"].is_array()) throw MalformedRecord(line, "missing array 'bonds'");

  MolRecord rec;
  auto& g = rec.g2d;
  g.id = j["id"].get<std::string>();
  g.theta_v = static_cast<std::size_t>(meta.theta_v);
  for (const auto& a : j["atoms"]) {
    if (!a.is_object()) throw MalformedRecord(line, "atom must be an object");
    const int t = detail::int_field(a, "t", line);
    if (t < 0 || t >= meta.theta_t)
      throw MalformedRecord(line, "atom type " + std::to_string(t) + " outside vocabulary of " + std::to_string(meta.theta_t));
    auto f = detail::real_array(a.value("f", json::array()), line, "atom 'f'");
    if (static_cast<int>(f.size()) != meta.theta_v)
      throw MalformedRecord(line, "atom feature width " + std::to_string(f.size()) + " != theta_v " + std::to_string(meta.theta_v));
    g.atom_types.push_back(t);
    g.atom_feats.insert(g.atom_feats.end(), f.begin(), f.end());
  }
  const int n = static_cast<int>(g.atom_count());
  std::set<std::pair<int, int>> seen;
  for (const auto& b : j["bonds"]) {
    if (!b.is_object()) throw MalformedRecord(line, "bond must be an object");
    Bond bond;
    bond.u = detail::int_field(b, "u", line);
    bond.v = detail::int_field(b, "v", line);
    bond.type = detail::int_field(b, "t", line);
    if (bond.u < 0 || bond.u >= n || bond.v < 0 || bond.v >= n)
      throw IndexOutOfRange("line " + std::to_string(line) + ": bond endpoint outside [0, " + std::to_string(n) + ")");
    if (bond.u == bond.v) throw IndexOutOfRange("line " + std::to_string(line) + ": self-bond on atom " + std::to_string(bond.u));
    if (!seen.insert(std::minmax(bond.u, bond.v)).second)
      throw MalformedRecord(line, "duplicate bond " + std::to_string(bond.u) + "-" + std::to_string(bond.v));
    if (bond.type < 0 || (meta.bond_type_count() > 0 && bond.type >= meta.bond_type_count()))
      throw MalformedRecord(line, "bond type " + std::to_string(bond.type) + " outside vocabulary");
    bond.feats = detail::real_array(b.value("f", json::array()), line, "bond 'f'");
    if (static_cast<int>(bond.feats.size()) != meta.theta_e)
      throw MalformedRecord(line, "bond feature width " + std::to_string(bond.feats.size()) + " != theta_e " + std::to_string(meta.theta_e));
    g.bonds.push_back(std::move(bond));
  }
  if (j.contains("labels") && !j["labels"].is_null()) {
    if (!j["labels"].is_array()) throw MalformedRecord(line, "'labels' must be an array");
    std::vector<std::optional<double>> labels;
    for (const auto& l : j["labels"]) {
      if (l.is_null()) labels.emplace_back(std::nullopt);
      else if (l.is_number()) labels.emplace_back(l.get<double>());
      else throw MalformedRecord(line, "labels must be numbers or null");
    }
    if (meta.task_count > 0 && static_cast<int>(labels.size()) != meta.task_count)
      throw MalformedRecord(line, "label count " + std::to_string(labels.size()) + " != tasks " + std::to_string(meta.task_count));
    g.labels = std::move(labels);
  }
  if (j.contains("coords") && !j["coords"].is_null()) {
    const auto& cj = j["coords"];
    if (!cj.is_array() || static_cast<int>(cj.size()) != n)
      throw MalformedRecord(line, "'coords' must hold one [x, y, z] per atom");
    MolGraph3D g3;
    g3.id = g.id;
    g3.atom_types = g.atom_types;
    for (const auto& c : cj) {
      auto xyz = detail::real_array(c, line, "coordinate");
      if (xyz.size() != 3) throw MalformedRecord(line, "coordinate must have 3 components");
      for (double x : xyz)
        if (!std::isfinite(x)) throw MalformedRecord(line, "non-finite coordinate");
      g3.coords.push_back({xyz[0], xyz[1], xyz[2]});
    }
    for (const auto& b : g.bonds) g3.bonds.emplace_back(b.u, b.v);
    rec.g3d = std::move(g3);
  }
  return rec;
}

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MalformedRecord(0, "cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string s;
  while (std::getline(in, s)) lines.push_back(std::move(s));
  return lines;
}

inline bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

/// Width and vocabulary inference when no sidecar meta exists.
inline DatasetMeta infer_meta(const std::vector<std::string>& lines) {
  DatasetMeta m;
  m.theta_v = -1;
  m.theta_e = -1;
  int max_t = -1, max_bt = -1, tasks = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const json::exception& e) {
      throw MalformedRecord(i + 1, e.what());
    }
    if (!j.is_object()) throw MalformedRecord(i + 1, "record must be a JSON object");
    for (const auto& a : j.value("atoms", json::array())) {
      if (!a.is_object()) continue;
      if (a.contains("t") && a["t"].is_number_integer()) max_t = std::max(max_t, a["t"].get<int>());
      if (m.theta_v < 0 && a.contains("f") && a["f"].is_array()) m.theta_v = static_cast<int>(a["f"].size());
    }
    for (const auto& b : j.value("bonds", json::array())) {
      if (!b.is_object()) continue;
      if (b.contains("t") && b["t"].is_number_integer()) max_bt = std::max(max_bt, b["t"].get<int>());
      if (m.theta_e < 0 && b.contains("f") && b["f"].is_array()) m.theta_e = static_cast<int>(b["f"].size());
    }
    if (j.contains("labels") && j["labels"].is_array()) tasks = std::max(tasks, static_cast<int>(j["labels"].size()));
  }
  m.theta_v = std::max(m.theta_v, 1);
  m.theta_e = std::max(m.theta_e, 1);
  m.theta_t = std::max(max_t + 1, 1);
  for (int t = 0; t < m.theta_t; ++t) m.atom_type_vocab.push_back("t" + std::to_string(t));
  for (int t = 0; t <= max_bt; ++t) m.bond_type_vocab.push_back("b" + std::to_string(t));
  if (m.bond_type_vocab.empty()) m.bond_type_vocab.push_back("b0");
  m.task_count = tasks;
  return m;
}

}  // namespace detail

inline DatasetMeta load_meta(const std::filesystem::path& data_path,
                             const std::vector<std::string>& lines) {
  const auto mp = meta_path_for(data_path);
  if (std::filesystem::exists(mp)) {
    std::ifstream in(mp);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw MalformedRecord(0, "meta '" + mp.string() + "': " + e.what());
    }
    auto m = meta_from_json(j);
    if (m.atom_type_vocab.empty())
      for (int t = 0; t < m.theta_t; ++t) m.atom_type_vocab.push_back("t" + std::to_string(t));
    if (m.bond_type_vocab.empty()) {
      const auto inferred = detail::infer_meta(lines);
      m.bond_type_vocab = inferred.bond_type_vocab;
    }
    return m;
  }
  return detail::infer_meta(lines);
}

/// Parse and validate a dataset. When `expect_3d` is false coordinates are
/// dropped; when true every record must carry them. `threads` > 1 shards the
/// lines across workers and merges in file order.
inline Dataset parse_dataset(const std::filesystem::path& path, bool expect_3d, unsigned threads = 1) {
  const auto lines = detail::read_lines(path);
  Dataset ds;
  ds.meta = load_meta(path, lines);

  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < lines.size(); ++i)
    if (!detail::blank(lines[i])) idx.push_back(i);

  std::vector<std::optional<MolRecord>> out(idx.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t line = idx[k] + 1;
      json j;
      try {
        j = json::parse(lines[idx[k]]);
      } catch (const json::exception& e) {
        throw MalformedRecord(line, e.what());
      }
      auto rec = record_from_json(j, line, ds.meta);
      if (expect_3d && !rec.g3d) throw MissingConformer("line " + std::to_string(line) + ": molecule '" + rec.g2d.id + "' has no coords");
      if (!expect_3d) rec.g3d.reset();
      out[k] = std::move(rec);
    }
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(idx.size(), 1))));
  if (threads == 1) {
    work(0, idx.size());
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    const std::size_t chunk = (idx.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(std::min(idx.size(), t * chunk), std::min(idx.size(), (t + 1) * chunk));
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  for (auto& r : out) ds.records.push_back(std::move(*r));
  return ds;
}

/// Join conformers from a second JSONL file (records with "id" and "coords") by id.
inline void attach_conformers(Dataset& ds, const std::filesystem::path& coords_path) {
  const auto lines = detail::read_lines(coords_path);
  std::unordered_map<std::string, std::vector<Vec3>> by_id;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (detail::blank(lines[i])) continue;
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const json::exception& e) {
      throw MalformedRecord(i + 1, e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("coords") || !j["coords"].is_array())
      throw MalformedRecord(i + 1, "conformer record needs 'id' and 'coords'");
    std::vector<Vec3> coords;
    for (const auto& c : j["coords"]) {
      auto xyz = detail::real_array(c, i + 1, "coordinate");
      if (xyz.size() != 3) throw MalformedRecord(i + 1, "coordinate must have 3 components");
      for (double x : xyz)
        if (!std::isfinite(x)) throw MalformedRecord(i + 1, "non-finite coordinate");
      coords.push_back({xyz[0], xyz[1], xyz[2]});
    }
    by_id[j["id"].get<std::string>()] = std::move(coords);
  }
  for (auto& r : ds.records) {
    auto it = by_id.find(r.g2d.id);
    if (it == by_id.end()) throw MissingConformer("no conformer for molecule '" + r.g2d.id + "'");
    if (it->second.size() != r.g2d.atom_count())
      throw MalformedRecord(0, "conformer for '" + r.g2d.id + "' has wrong atom count");
    MolGraph3D g3;
    g3.id = r.g2d.id;
    g3.atom_types = r.g2d.atom_types;
    g3.coords = it->second;
    for (const auto& b : r.g2d.bonds) g3.bonds.emplace_back(b.u, b.v);
    r.g3d = std::move(g3);
  }
}

inline std::string serialize_records(const Dataset& ds) {
  std::string out;
  for (const auto& r : ds.records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

/// Writes the JSONL file and its sidecar meta.
inline void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw MalformedRecord(0, "cannot write '" + path.string() + "'");
    f << serialize_records(ds);
  }
  std::ofstream m(meta_path_for(path), std::ios::binary | std::ios::trunc);
  m << meta_to_json(ds.meta).dump(2) << '\n';
}

}  // namespace galformer::molio
