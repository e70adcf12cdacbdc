#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "semdial/cli.hpp"
#include "semdial/errors.hpp"

using namespace semdial;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "semdial");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) rows.push_back(json::parse(line));
  return rows;
}

// A fresh scratch directory per test case.
fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("semdial_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const std::vector<std::string> kTinyModel = {"--layers", "1", "--heads", "2", "--hidden", "16", "--max-positions",
                                             "256", "--dropout", "0", "--max-steps", "6", "--validate-every", "3",
                                             "--batch-size", "4", "--learning-rate", "1e-3"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("usage errors") {
  auto r = run({});
  CHECK(r.code != 0);
  r = run({"train", "--bogus"});
  CHECK(r.code != 0);
  CHECK_FALSE(r.err.empty());
  r = run({"eval", "--mode", "sideways", "--checkpoint", "x", "--corpus", ".", "--da-clf", "x", "--emo-clf", "x",
           "--out", "x"});
  CHECK(r.code != 0);
  r = run({"toy", "--out", (fs::temp_directory_path() / "semdial_cli_big").string(), "--sessions", "201"});
  CHECK(r.code == 1);
  CHECK(r.err.find("200") != std::string::npos);
}

TEST_CASE("policy display") {
  auto r = run({"generate", "--checkpoint", "none", "--out", "none", "--show-policy"});
  REQUIRE(r.code == 0);
  auto p = json::parse(r.out);
  CHECK(p["response"]["top_k"] == 50);
  CHECK(p["response"]["top_p"] == 0.9);
  CHECK(p["response"]["temperature"] == 0.7);
  CHECK(p["use_planning"] == true);
  r = run({"eval", "--checkpoint", "none", "--corpus", ".", "--da-clf", "CMakeLists.txt", "--emo-clf",
           "CMakeLists.txt", "--out", "none", "--show-policy", "--no-planning", "--no-understanding",
           "--no-repetition-constraint", "--no-topical-min-length"});
  REQUIRE(r.code == 0);
  p = json::parse(r.out);
  CHECK(p["use_planning"] == false);
  CHECK(p["use_understanding"] == false);
  CHECK(p["planning"]["lengths"]["topical"]["min"] == 0);
  CHECK(p["planning"]["repetition_constraint"]["enabled"] == false);
}

TEST_CASE("toy, classifiers, annotate, stats") {
  const auto dir = scratch("pipeline");
  const auto toy = (dir / "toy").string();
  REQUIRE(run({"toy", "--out", toy, "--sessions", "30", "--seed", "4"}).code == 0);
  const auto first = slurp(dir / "toy" / "train.jsonl");
  REQUIRE(run({"toy", "--out", toy, "--sessions", "30", "--seed", "4"}).code == 0);
  CHECK(slurp(dir / "toy" / "train.jsonl") == first);
  const auto manifest = json::parse(slurp(dir / "toy" / "manifest.json"));
  CHECK(manifest["subcommand"] == "toy");
  CHECK(manifest["settings"]["seed"] == 4);
  CHECK(manifest["outputs"].size() == 6);

  const auto da = (dir / "da.clf").string();
  const auto emo = (dir / "emo.clf").string();
  REQUIRE(run({"train-classifier", "--data", toy + "/dialogue_acts.tsv", "--task", "dialogue_act", "--out", da})
              .code == 0);
  REQUIRE(run({"train-classifier", "--data", toy + "/emotions.tsv", "--task", "emotion", "--out", emo}).code == 0);
  CHECK(fs::exists(da + ".manifest.json"));

  const auto annotated = (dir / "annotated.jsonl").string();
  auto r = run({"annotate", "--corpus", toy + "/raw.jsonl", "--vocab-size", "50", "--da-clf", da, "--emo-clf", emo,
                "--out", annotated});
  REQUIRE(r.code == 0);
  const auto rows = read_jsonl(annotated);
  CHECK(rows.size() == 30);
  const auto gold = read_jsonl(toy + "/train.jsonl");
  // The classifiers memorized every template sentence of the training split.
  CHECK(rows[0]["utterances"][0]["annotation"]["dialogue_acts"] ==
        gold[0]["utterances"][0]["annotation"]["dialogue_acts"]);
  CHECK(fs::exists(annotated + ".topical.tsv"));

  r = run({"stats", "--corpus", toy, "--out", (dir / "stats").string()});
  REQUIRE(r.code == 0);
  const auto stats = json::parse(slurp(dir / "stats" / "stats.json"));
  CHECK(stats["stats"]["Sessions"] == 24);
  CHECK(stats["stats"]["DAs(Emotions)/Utt."] == 2.0);
  CHECK(stats.contains("dialogue_act_transitions"));
}

TEST_CASE("train, generate, and eval") {
  const auto dir = scratch("train");
  const auto toy = (dir / "toy").string();
  REQUIRE(run({"toy", "--out", toy, "--sessions", "20", "--exchanges", "1", "--seed", "2"}).code == 0);
  const auto corpus = toy + "/train.jsonl";

  const auto a = (dir / "a").string();
  const auto b = (dir / "b").string();
  auto r = run(concat({"train", "--corpus", corpus, "--seed", "7", "--out", a}, kTinyModel));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  REQUIRE(run(concat({"train", "--corpus", corpus, "--seed", "7", "--out", b}, kTinyModel)).code == 0);
  CHECK(slurp(a + "/model.ckpt") == slurp(b + "/model.ckpt"));
  CHECK(slurp(a + "/manifest.json") != "");
  const auto manifest = json::parse(slurp(a + "/manifest.json"));
  CHECK(manifest["settings"]["seed"] == 7);
  CHECK(manifest["settings"]["config"]["hidden_dim"] == 16);
  CHECK(manifest["outputs"].contains(a + "/model.ckpt"));
  REQUIRE(run(concat({"train", "--corpus", corpus, "--seed", "8", "--out", b}, kTinyModel)).code == 0);
  CHECK(slurp(a + "/model.ckpt") != slurp(b + "/model.ckpt"));

  r = run({"generate", "--checkpoint", a, "--corpus", corpus, "--out", (dir / "gen").string(), "--no-planning",
           "--seed", "3"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto traces = read_jsonl(dir / "gen" / "traces.jsonl");
  CHECK(traces.size() == 16);
  for (const auto& t : traces) CHECK(t["trace"]["planned"].is_null());
  const auto gen_manifest = json::parse(slurp(dir / "gen" / "manifest.json"));
  CHECK(gen_manifest["settings"]["ablations"]["no_planning"] == true);

  r = run({"generate", "--checkpoint", a, "--text", "do you like rock ?", "--out", (dir / "one").string()});
  REQUIRE(r.code == 0);
  CHECK(read_jsonl(dir / "one" / "traces.jsonl").size() == 1);
  CHECK(run({"generate", "--checkpoint", a, "--out", (dir / "none").string()}).code == 1);

  // Classifier data from a full-size corpus covers every label.
  const auto full = (dir / "full").string();
  REQUIRE(run({"toy", "--out", full}).code == 0);
  REQUIRE(run({"train-classifier", "--data", full + "/dialogue_acts.tsv", "--task", "dialogue_act", "--out",
               (dir / "da.clf").string()})
              .code == 0);
  REQUIRE(run({"train-classifier", "--data", full + "/emotions.tsv", "--task", "emotion", "--out",
               (dir / "emo.clf").string()})
              .code == 0);
  const std::vector<std::string> eval_args = {"eval",    "--checkpoint", a,      "--corpus", toy, "--split", "train",
                                              "--da-clf", (dir / "da.clf").string(), "--emo-clf",
                                              (dir / "emo.clf").string(), "--max-samples", "4"};
  r = run(concat(eval_args, {"--mode", "gold", "--out", (dir / "eval_gold").string()}));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto report = nlohmann::ordered_json::parse(slurp(dir / "eval_gold" / "report.json"));
  CHECK(report["mode"] == "gold");
  std::vector<std::string> keys;
  for (const auto& [k, _] : report["generation"].items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"BLEU-1", "BLEU-2", "BLEU-3", "PPL", "Average", "Extreme", "Dist-1 %",
                                         "Dist-2 %"});
  CHECK(report["generation"]["PPL"].is_number());
  keys.clear();
  for (const auto& [k, _] : report["semantic"].items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"Topical-Recall", "DAs-F1", "Emotions-F1"});
  CHECK(report["per_sample"].size() == 4);

  r = run(concat(eval_args, {"--mode", "gold", "--no-planning", "--out", (dir / "eval_bad").string()}));
  CHECK(r.code == 1);
  CHECK(r.err.find("planning") != std::string::npos);

  // Checkpoints resolve through the cache directory.
  ::setenv(kCacheDirEnv, dir.c_str(), 1);
  REQUIRE(run(concat({"train", "--corpus", corpus, "--seed", "7"}, kTinyModel)).code == 0);
  CHECK(slurp(dir / "train-seed7" / "model.ckpt") == slurp(a + "/model.ckpt"));
  CHECK(resolve_checkpoint("train-seed7") == dir / "train-seed7" / "model.ckpt");
  ::unsetenv(kCacheDirEnv);
  CHECK_THROWS_AS(resolve_checkpoint("train-seed7"), IoError);
}
