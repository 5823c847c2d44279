#pragma once

// Plumbing shared by the command-line tool and the acceptance suite: layered
// run configuration, run manifests and parallel molecule preparation.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "galformer/errors.hpp"
#include "galformer/finetune/config.hpp"
#include "galformer/io/config_json.hpp"
#include "galformer/model/prepared.hpp"
#include "galformer/molio/dataset.hpp"
#include "galformer/numcore/optim.hpp"
#include "galformer/numcore/rng.hpp"
#include "galformer/pretrain/config.hpp"

namespace galformer::app {

using json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

struct RunConfig {
  model::ModelConfig model;
  pretrain::PretrainConfig pretrain;
  nc::OptimizerConfig optimizer;
  finetune::FinetuneConfig finetune;

  json to_json() const {
    return {{"model", io::config_to_json(model)},
            {"pretrain", io::config_to_json(pretrain)},
            {"optimizer", io::config_to_json(optimizer)},
            {"finetune", io::config_to_json(finetune)}};
  }

  void validate() const {
    model.validate();
    pretrain.validate();
    finetune.validate();
  }
};

/// Accepts flat dotted keys ("model.layers": 2), nested sections, or a run
/// manifest (whose "config" is used). Returns the nested form.
inline json normalize_config(const json& raw) {
  if (!raw.is_object()) throw ConfigError("config must be a JSON object");
  const json& src = raw.contains("manifest_version") && raw.contains("config") ? raw["config"] : raw;
  json out = json::object();
  for (const auto& [key, value] : src.items()) {
    const auto dot = key.find('.');
    if (dot != std::string::npos) {
      out[key.substr(0, dot)][key.substr(dot + 1)] = value;
    } else if (value.is_object()) {
      for (const auto& [k, v] : value.items()) out[key][k] = v;
    } else {
      throw ConfigError("config key '" + key + "' is neither dotted nor a section");
    }
  }
  return out;
}

inline void apply_config(RunConfig& rc, const json& nested) {
  for (const auto& [section, body] : nested.items()) {
    if (section == "model") io::overlay_config(rc.model, body, section);
    else if (section == "pretrain") io::overlay_config(rc.pretrain, body, section);
    else if (section == "optimizer") io::overlay_config(rc.optimizer, body, section);
    else if (section == "finetune") io::overlay_config(rc.finetune, body, section);
    else throw ConfigError("unknown config section '" + section + "'");
  }
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// "model.layers=3"; the value is parsed as JSON, falling back to a string.
inline json parse_assignment(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
  const auto key = s.substr(0, eq), text = s.substr(eq + 1);
  json v;
  try {
    v = json::parse(text);
  } catch (const json::exception&) {
    v = text;
  }
  return {{key, v}};
}

/// Defaults, then the config file, then each --set in order.
inline RunConfig load_run_config(const std::string& config_path, const std::vector<std::string>& sets) {
  RunConfig rc;
  if (!config_path.empty()) apply_config(rc, normalize_config(read_json_file(config_path)));
  for (const auto& s : sets) apply_config(rc, normalize_config(parse_assignment(s)));
  return rc;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline json file_fingerprint(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MalformedRecord(0, "cannot read '" + p.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return {{"path", p.string()}, {"bytes", bytes.size()}, {"fnv1a64", hex64(nc::fnv1a64(bytes))}};
}

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write " + tmp.string());
    f << text;
    if (!f.flush()) throw ConfigError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// One manifest.json per output directory, written when the run starts and
/// rewritten in place (atomically) with timings when it ends.
class RunManifest {
 public:
  RunManifest(std::filesystem::path dir, std::string command, std::vector<std::string> argv, json config,
              std::uint64_t seed)
      : path_(std::move(dir) / "manifest.json"), start_(std::chrono::steady_clock::now()) {
    doc_ = {{"manifest_version", 1},
            {"artifact_version", kVersion},
            {"command", std::move(command)},
            {"argv", std::move(argv)},
            {"seed", seed},
            {"config", std::move(config)},
            {"datasets", json::object()},
            {"timings", {{"started_utc", utc_now()}, {"finished_utc", nullptr}, {"wall_seconds", nullptr}}},
            {"status", "running"}};
  }

  void add_dataset(const std::string& role, const std::filesystem::path& p) {
    doc_["datasets"][role] = file_fingerprint(p);
    const auto meta = molio::meta_path_for(p);
    if (std::filesystem::exists(meta)) doc_["datasets"][role + ".meta"] = file_fingerprint(meta);
  }
  json& extra() { return doc_; }

  void phase(const std::string& name, double seconds) { doc_["timings"]["phases"][name] = seconds; }
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  void write() const { write_atomic(path_, doc_.dump(2) + "\n"); }

  void finish(const std::string& status) {
    doc_["status"] = status;
    doc_["timings"]["finished_utc"] = utc_now();
    doc_["timings"]["wall_seconds"] = elapsed();
    write();
  }

 private:
  std::filesystem::path path_;
  std::chrono::steady_clock::time_point start_;
  json doc_;
};

/// Line graphs and encodings for every record, sharded over `threads`
/// workers. Each molecule is independent, so the result does not depend on
/// the thread count.
template <std::floating_point T>
std::vector<model::PreparedMolecule<T>> prepare_all(const molio::Dataset& ds, const model::ModelConfig& cfg,
                                                    bool need_3d, unsigned threads = 1) {
  const auto n = ds.records.size();
  std::vector<model::PreparedMolecule<T>> out(n);
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) out[i] = model::prepare_molecule<T>(ds.records[i], ds.meta, cfg, need_3d);
  };
  if (threads == 1) {
    work(0, n);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        work(std::min(n, t * chunk), std::min(n, (t + 1) * chunk));
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace galformer::app
