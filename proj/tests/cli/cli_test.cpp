// Drives the leona binary end to end through the shell.

#include "leona/jsonl.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
};

Result run(const std::string& args, const fs::path& cwd) {
  const fs::path log = cwd / "last-run.log";
  const std::string cmd = "cd '" + cwd.string() + "' && '" LEONA_CLI "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, leona::read_file(log)};
}

fs::path workdir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("leona-cli-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small network so a few epochs finish in seconds.
void write_config(const fs::path& dir, std::size_t epochs = 3) {
  const json cfg = {
      {"corpus", "toy/corpus.jsonl"},
      {"slots", "toy/slots.jsonl"},
      {"provider", "fallback"},
      {"model", {{"pos_dim", 6}, {"ner_dim", 4}, {"ctx_dim", 16}, {"fused_dim", 16}, {"lstm_hidden", 8},
                 {"iob_feed_dim", 4}, {"head_dim", 12}}},
      {"train", {{"max_epochs", epochs}, {"batch_size", 8}}},
      {"split", {{"regime", "leave_one_out"}, {"unit", "domain"}}}};
  std::ofstream(dir / "config.json") << cfg.dump(2);
}

// prepare, split, train, predict and eval in `dir`; returns the eval report.
json pipeline(const fs::path& dir) {
  EXPECT_EQ(run("prepare --synthetic toy --out toy", dir).code, 0);
  write_config(dir);
  auto r = run("split --config config.json --target-unit music --seed 2 --out splits", dir);
  EXPECT_EQ(r.code, 0) << r.out;
  const std::string manifest = "splits/leave_one_out-music-seed2.json";
  EXPECT_TRUE(fs::exists(dir / manifest));
  r = run("train --config config.json --split " + manifest + " --run-dir run --seed 2", dir);
  EXPECT_EQ(r.code, 0) << r.out;
  r = run("predict --config config.json --split " + manifest + " --run-dir run", dir);
  EXPECT_EQ(r.code, 0) << r.out;
  r = run("eval --config config.json --predictions run/predictions.jsonl --run-dir run --out run/eval.json", dir);
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("unseen"), std::string::npos);
  return json::parse(leona::read_file(dir / "run/eval.json"));
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  const auto dir = workdir("usage");
  EXPECT_EQ(run("--help", dir).code, 0);
  EXPECT_EQ(run("", dir).code, 1);
  EXPECT_EQ(run("frobnicate", dir).code, 1);
  EXPECT_EQ(run("split --percentage 30 --out x", dir).code, 1);
}

TEST(Cli, PrepareWritesLoadableCorpusAndAnnotations) {
  const auto dir = workdir("prepare");
  const auto r = run("prepare --synthetic toy --out toy --write-annotations", dir);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("50 utterances"), std::string::npos);
  for (const char* f : {"corpus.jsonl", "slots.jsonl", "annotations.jsonl", "embeddings.bin"})
    EXPECT_TRUE(fs::exists(dir / "toy" / f)) << f;
  const auto v = run("validate-annotations --corpus toy/corpus.jsonl --slots toy/slots.jsonl "
                     "--annotations toy/annotations.jsonl --embeddings toy/embeddings.bin",
                     dir);
  EXPECT_EQ(v.code, 0) << v.out;
  EXPECT_NE(v.out.find("0 errors"), std::string::npos);
}

TEST(Cli, InvalidInputExitsWithOne) {
  const auto dir = workdir("invalid");
  std::ofstream(dir / "bad.jsonl") << "{\"id\":\"1\",\"domain\":\"d\",\"intent\":\"i\",\"tokens\":[\"a\"],\"labels\":[\"I-x\"]}\n";
  EXPECT_EQ(run("split --corpus bad.jsonl --out s", dir).code, 1);
  std::ofstream(dir / "ann.jsonl") << "{\"id\":\"1\",\"pos\":[\"DET\"],\"ner\":[\"B-CITY\"]}\n";
  const auto r = run("validate-annotations --annotations ann.jsonl", dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("not valid IOB"), std::string::npos);
  ASSERT_EQ(run("prepare --synthetic toy --out toy", dir).code, 0);
  EXPECT_EQ(run("split --corpus toy/corpus.jsonl --slots toy/slots.jsonl --target-unit nowhere --out s", dir).code, 1);
}

TEST(Cli, RuntimeFailureExitsWithTwo) {
  const auto dir = workdir("runtime");
  ASSERT_EQ(run("prepare --synthetic toy --out toy", dir).code, 0);
  fs::create_directories(dir / "run");
  std::ofstream(dir / "run/best.ckpt") << "LEONACKP garbage";
  const auto r = run("predict --corpus toy/corpus.jsonl --slots toy/slots.jsonl --run-dir run", dir);
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("error:"), std::string::npos);
}

TEST(Cli, PipelineIsByteIdenticalAcrossRuns) {
  const auto a = workdir("det-a");
  const auto b = workdir("det-b");
  const json ra = pipeline(a);
  pipeline(b);
  for (const char* f : {"splits/leave_one_out-music-seed2.json", "run/metrics.jsonl", "run/config.json",
                        "run/best.ckpt", "run/predictions.jsonl", "run/eval.json"})
    EXPECT_EQ(leona::read_file(a / f), leona::read_file(b / f)) << f;
  EXPECT_TRUE(ra.contains("micro"));
  EXPECT_FALSE(ra.at("unseen").is_null());
}

TEST(Cli, ResumedTrainingMatchesOneShot) {
  const auto dir = workdir("resume");
  ASSERT_EQ(run("prepare --synthetic toy --out toy", dir).code, 0);
  write_config(dir, 4);
  ASSERT_EQ(run("train --config config.json --run-dir whole", dir).code, 0);
  ASSERT_EQ(run("train --config config.json --run-dir part --max-epochs 2", dir).code, 0);
  const auto r = run("train --config config.json --run-dir part --resume", dir);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(leona::read_file(dir / "whole/metrics.jsonl"), leona::read_file(dir / "part/metrics.jsonl"));
  EXPECT_EQ(leona::read_file(dir / "whole/last.ckpt"), leona::read_file(dir / "part/last.ckpt"));
}

TEST(Cli, AggregatesReports) {
  const auto dir = workdir("aggregate");
  for (int i = 0; i < 5; ++i)
    std::ofstream(dir / ("r" + std::to_string(i) + ".json"))
        << json{{"micro", {{"f1", 0.5 + 0.1 * i}}}, {"seen", nullptr}, {"unseen", nullptr}}.dump();
  const auto r = run("eval --aggregate --predictions r0.json r1.json r2.json r3.json r4.json --out agg.json", dir);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("micro_f1: 0.7000 ± 0.1581 over 5 runs"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("seen_f1: N/A"), std::string::npos);
}
