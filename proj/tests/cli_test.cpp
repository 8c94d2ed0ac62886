#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "menan/cli.hpp"

namespace fs = std::filesystem;
using menan::cli::dispatch;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / "menan_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    unsetenv("MENAN_DATA_DIR");
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path write_config(const std::string& name, const fs::path& data) {
    auto path = root_ / name;
    std::ofstream(path) << "# tiny pipeline\n"
                        << "data_dir = " << data.string() << "\n"
                        << "synth.n_speakers = 4\nsynth.n_per_cell = 2\n"
                        << "synth.min_seconds = 0.4\nsynth.max_seconds = 0.6\n"
                        << "target_seconds = 0.5\nspeed_ratios = 1.1\n"
                        << "epochs = 2\nbatch_size = 8\nprobe_epochs = 20\n";
    return path;
  }

  fs::path root_;
};

}  // namespace

TEST_F(Cli, UnknownVerbRejectedBeforeIo) {
  auto r = run({"sing", "--out", (root_ / "never").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(root_ / "never"));
  EXPECT_EQ(run({}).code, 2);
}

TEST_F(Cli, HelpSucceeds) { EXPECT_EQ(run({"--help"}).code, 0); }

TEST_F(Cli, SynthIsDeterministic) {
  auto cfg = write_config("c.conf", root_ / "unused");
  ASSERT_EQ(run({"synth", "--config", cfg.string(), "--seed", "7", "--out", (root_ / "a").string()})
                .code,
            0);
  ASSERT_EQ(run({"synth", "--config", cfg.string(), "--seed", "7", "--out", (root_ / "b").string()})
                .code,
            0);
  for (const auto& f : fs::recursive_directory_iterator(root_ / "a")) {
    if (!f.is_regular_file()) continue;
    auto rel = fs::relative(f.path(), root_ / "a");
    if (rel == "synth.run.json") continue;  // records its own output path
    EXPECT_EQ(slurp(f.path()), slurp(root_ / "b" / rel)) << rel;
  }
  EXPECT_TRUE(fs::exists(root_ / "a" / "manifest.csv"));
  EXPECT_TRUE(fs::exists(root_ / "a" / "synth.run.json"));
}

TEST_F(Cli, EvaluateWithoutCheckpointIsMissingFile) {
  auto data = root_ / "data";
  auto cfg = write_config("c.conf", data);
  ASSERT_EQ(run({"synth", "--config", cfg.string()}).code, 0);
  auto r = run({"evaluate", "--config", cfg.string(), "--out", (root_ / "run").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("checkpoint"), std::string::npos);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST_F(Cli, ConfigErrors) {
  auto bad = root_ / "bad.conf";
  std::ofstream(bad) << "colour = blue\n";
  EXPECT_EQ(run({"synth", "--config", bad.string(), "--out", root_.string()}).code, 2);
  EXPECT_EQ(run({"synth", "--config", (root_ / "missing.conf").string()}).code, 3);
  auto lam = root_ / "lambda.conf";
  std::ofstream(lam) << "lambda = 1.5\ndata_dir = " << root_.string() << "\n";
  EXPECT_EQ(run({"train", "--config", lam.string(), "--out", (root_ / "r").string()}).code, 2);
  EXPECT_EQ(run({"train", "--regime", "gan", "--out", root_.string()}).code, 2);
  EXPECT_EQ(run({"train", "--out", (root_ / "r").string()}).code, 2);  // no dataset root
}

TEST_F(Cli, DataDirFromEnvironment) {
  auto data = root_ / "envdata";
  auto cfg = root_ / "env.conf";
  std::ofstream(cfg) << "synth.n_speakers = 4\nsynth.n_per_cell = 1\nsynth.min_seconds = 0.3\nsynth.max_seconds = 0.5\n";
  setenv("MENAN_DATA_DIR", data.c_str(), 1);
  EXPECT_EQ(run({"synth", "--config", cfg.string(), "--seed", "1"}).code, 0);
  EXPECT_TRUE(fs::exists(data / "manifest.csv"));
  unsetenv("MENAN_DATA_DIR");
}

TEST_F(Cli, FullPipelineIsReproducible) {
  auto data = root_ / "data";
  auto cfg = write_config("c.conf", data).string();
  ASSERT_EQ(run({"synth", "--config", cfg, "--seed", "3"}).code, 0);
  ASSERT_EQ(run({"extract", "--config", cfg}).code, 0);
  EXPECT_TRUE(fs::exists(data / "features" / "folds.json"));

  for (const std::string name : {"run1", "run2"}) {
    auto out = (root_ / name).string();
    ASSERT_EQ(run({"train", "--config", cfg, "--regime", "menan", "--fold", "1", "--seed", "5",
                   "--out", out})
                  .code,
              0);
    ASSERT_EQ(run({"probe", "--config", cfg, "--fold", "1", "--seed", "5", "--out", out}).code, 0);
    ASSERT_EQ(run({"evaluate", "--config", cfg, "--seed", "5", "--out", out}).code, 0);
    ASSERT_EQ(run({"export-embeddings", "--config", cfg, "--out", out}).code, 0);
  }
  auto a = root_ / "run1", b = root_ / "run2";
  for (const char* rel : {"fold_1/train.log.jsonl", "fold_1/best.ckpt", "probe.json",
                          "report.json", "report.txt", "fold_1/embeddings.csv"}) {
    ASSERT_TRUE(fs::exists(a / rel)) << rel;
    EXPECT_EQ(slurp(a / rel), slurp(b / rel)) << rel;
  }
  for (const char* verb : {"train", "probe", "evaluate", "export-embeddings"}) {
    EXPECT_TRUE(fs::exists(a / (std::string(verb) + ".run.json"))) << verb;
  }
  EXPECT_NE(slurp(a / "probe.json").find("probe_accuracy"), std::string::npos);
  EXPECT_NE(slurp(a / "train.run.json").find("\"regime\": \"menan\""), std::string::npos);

  std::istringstream csv(slurp(a / "fold_1/embeddings.csv"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 1u + 4 * 4 * 2);
}
