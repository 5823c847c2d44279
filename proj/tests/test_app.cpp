#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "galformer/app/run.hpp"
#include "galformer/molio/toy.hpp"

using namespace galformer;
using namespace galformer::app;
using json = nlohmann::json;

TEST(Config, FlatNestedAndManifestFormsAgree) {
  const json flat = {{"model.layers", 3}, {"pretrain.seed", 9}, {"finetune.seeds", {4, 5}}};
  const json nested = {{"model", {{"layers", 3}}}, {"pretrain", {{"seed", 9}}}, {"finetune", {{"seeds", {4, 5}}}}};
  EXPECT_EQ(normalize_config(flat), normalize_config(nested));
  RunConfig a, b;
  apply_config(a, normalize_config(flat));
  apply_config(b, normalize_config(json{{"manifest_version", 1}, {"command", "pretrain"}, {"config", nested}}));
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.model.layers, 3);
  EXPECT_EQ(a.finetune.seeds, (std::vector<std::uint64_t>{4, 5}));
  // a full snapshot round-trips
  RunConfig c;
  apply_config(c, normalize_config(a.to_json()));
  EXPECT_EQ(c.to_json(), a.to_json());
}

TEST(Config, ErrorsAndOverrides) {
  RunConfig rc;
  EXPECT_THROW(apply_config(rc, normalize_config(json{{"modle.layers", 1}})), ConfigError);
  EXPECT_THROW(apply_config(rc, normalize_config(json{{"model.layer", 1}})), ConfigError);
  EXPECT_THROW(apply_config(rc, normalize_config(json{{"model.layers", "two"}})), ConfigError);
  EXPECT_THROW(normalize_config(json{{"layers", 2}}), ConfigError);
  EXPECT_THROW(parse_assignment("model.layers"), ConfigError);
  EXPECT_EQ(parse_assignment("model.dropout=0.25"), (json{{"model.dropout", 0.25}}));
  EXPECT_EQ(parse_assignment("x.y=abc"), (json{{"x.y", "abc"}}));

  const auto path = std::filesystem::temp_directory_path() / "galformer_test_config.json";
  std::ofstream(path) << R"({"model.layers": 5, "model.hidden": 32})";
  const auto loaded = load_run_config(path.string(), {"model.layers=1", "optimizer.peak_lr=0.01"});
  EXPECT_EQ(loaded.model.layers, 1);  // later layers win
  EXPECT_EQ(loaded.model.hidden, 32);
  EXPECT_EQ(loaded.optimizer.peak_lr, 0.01);
  std::filesystem::remove(path);
}

TEST(Manifest, AtomicAndSingle) {
  const auto dir = std::filesystem::temp_directory_path() / "galformer_manifest_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto data = dir / "d.jsonl";
  std::ofstream(data) << "abc\n";
  RunManifest m(dir, "pretrain", {"galformer", "pretrain"}, RunConfig{}.to_json(), 3);
  m.add_dataset("data", data);
  m.write();
  m.finish("ok");
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files += e.path().filename() != "d.jsonl";
  EXPECT_EQ(files, 1u);
  const auto j = read_json_file(dir / "manifest.json");
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["datasets"]["data"]["fnv1a64"], hex64(nc::fnv1a64("abc\n")));
  EXPECT_EQ(j["seed"], 3);
  EXPECT_TRUE(j["timings"]["wall_seconds"].is_number());
  std::filesystem::remove_all(dir);
}

TEST(Prepare, ThreadCountDoesNotChangeResults) {
  const auto ds = molio::generate_toy_corpus(23, 4, molio::ToyKind::mixed);
  model::ModelConfig cfg;
  const auto one = prepare_all<double>(ds, cfg, true, 1);
  const auto four = prepare_all<double>(ds, cfg, true, 4);
  ASSERT_EQ(one.size(), four.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].id, four[i].id);
    EXPECT_EQ(one[i].d2.structure.pe.vectors, four[i].d2.structure.pe.vectors);
    EXPECT_EQ(one[i].d3->structure.spt.length, four[i].d3->structure.spt.length);
  }
}
