#include <gtest/gtest.h>
#include <sys/wait.h>

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("wice_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
            std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string at(const std::string& name) const { return (dir_ / name).string(); }

  Result run(const std::string& args) const {
    const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string(WICE_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  void pipeline(const std::string& tag, int pages = 200, int sites = 10) {
    const auto corpus = at(tag + "corpus");
    ASSERT_EQ(run("synth --out " + corpus + " --pages " + std::to_string(pages) + " --sites " +
                  std::to_string(sites))
                  .code,
              0);
    auto r = run("preprocess --corpus " + corpus + " --out " + at(tag + "graphs.jsonl"));
    ASSERT_EQ(r.code, 0) << r.err;
    r = run("embed --graphs " + at(tag + "graphs.jsonl") + " --dim 64 --out " + at(tag + "emb.cache"));
    ASSERT_EQ(r.code, 0) << r.err;
    r = run("train --graphs " + at(tag + "graphs.jsonl") + " --embeddings " + at(tag + "emb.cache") +
            " --dim 64 --epochs 3 --hidden 16,8 --out " + at(tag + "model.ckpt"));
    ASSERT_EQ(r.code, 0) << r.err;
    r = run("evaluate --graphs " + at(tag + "graphs.jsonl") + " --embeddings " + at(tag + "emb.cache") +
            " --ckpt " + at(tag + "model.ckpt") + " --out " + at(tag + "results.jsonl"));
    ASSERT_EQ(r.code, 0) << r.err;
  }

  fs::path dir_;
};

TEST_F(Cli, SmokePipeline) {
  pipeline("");
  for (const auto* f : {"graphs.jsonl", "emb.cache", "model.ckpt", "model.ckpt.metrics.jsonl", "results.jsonl",
                        "results.jsonl.summary.json"}) {
    EXPECT_TRUE(fs::exists(at(f))) << f;
    EXPECT_TRUE(fs::exists(at(std::string(f) + ".meta.json")) || std::string(f).find("summary") != std::string::npos)
        << f;
  }
  const auto summary = nlohmann::json::parse(slurp(at("results.jsonl.summary.json")));
  std::vector<std::string> methods;
  for (const auto& m : summary.at("methods")) methods.push_back(m.at("method"));
  EXPECT_EQ(methods, (std::vector<std::string>{"wgcn", "blind", "distance", "title", "text_after_image", "random",
                                               "oracle"}));
  EXPECT_EQ(summary.at("oracle_dominance_violations"), 0);
  std::ifstream results(at("results.jsonl"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(results, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_GE(j.at("wice_loss").get<double>(), 0.0);
    ++rows;
  }
  EXPECT_GT(rows, 0u);

  const auto page = at("corpus/p00000.html");
  const auto r = run("extract --ckpt " + at("model.ckpt") + " --html " + page);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\t'), 2);
}

TEST_F(Cli, EvaluateBeforeTrain) {
  ASSERT_EQ(run("synth --out " + at("c") + " --pages 20 --sites 2").code, 0);
  ASSERT_EQ(run("preprocess --corpus " + at("c") + " --out " + at("g.jsonl")).code, 0);
  ASSERT_EQ(run("embed --graphs " + at("g.jsonl") + " --dim 64 --out " + at("e.cache")).code, 0);
  const auto r = run("evaluate --graphs " + at("g.jsonl") + " --embeddings " + at("e.cache") + " --out " +
                     at("r.jsonl"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("MissingPrerequisite"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(at("r.jsonl")));
  // Model-free methods need no checkpoint.
  EXPECT_EQ(run("evaluate --graphs " + at("g.jsonl") + " --embeddings " + at("e.cache") +
                " --methods oracle,distance --partition all --out " + at("r.jsonl"))
                .code,
            0);
}

TEST_F(Cli, RerunIsByteIdentical) {
  pipeline("a_", 60, 6);
  pipeline("b_", 60, 6);
  for (const auto* f : {"graphs.jsonl", "emb.cache", "model.ckpt", "results.jsonl"}) {
    EXPECT_EQ(slurp(at(std::string("a_") + f)), slurp(at(std::string("b_") + f))) << f;
  }
}

TEST_F(Cli, HelpAndUsage) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("train --help").code, 0);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("train --no-such-flag").code, 1);
  EXPECT_EQ(run("synth --out " + at("x") + " --pages nine").code, 1);
}

TEST_F(Cli, EmbeddingsFromOtherGraphs) {
  ASSERT_EQ(run("synth --out " + at("c1") + " --pages 20 --sites 2").code, 0);
  ASSERT_EQ(run("synth --seed 5 --out " + at("c2") + " --pages 20 --sites 2").code, 0);
  ASSERT_EQ(run("preprocess --corpus " + at("c1") + " --out " + at("g1.jsonl")).code, 0);
  ASSERT_EQ(run("preprocess --corpus " + at("c2") + " --out " + at("g2.jsonl")).code, 0);
  ASSERT_EQ(run("embed --graphs " + at("g2.jsonl") + " --dim 64 --out " + at("e2.cache")).code, 0);
  const auto r = run("train --graphs " + at("g1.jsonl") + " --embeddings " + at("e2.cache") +
                     " --dim 64 --epochs 1 --out " + at("m.ckpt"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("ProvenanceMismatch"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(at("m.ckpt")));
}

TEST_F(Cli, ConfigFileWithOverride) {
  {
    std::ofstream cfg(at("run.json"));
    cfg << R"({"pages": 12, "sites": 3, "seed": 7})";
  }
  auto r = run("--config " + at("run.json") + " synth --out " + at("c"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out).at("processed"), 12);
  r = run("--config " + at("run.json") + " synth --pages 15 --out " + at("d"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out).at("processed"), 15);
  const auto meta = nlohmann::json::parse(slurp(at("d/manifest.tsv.meta.json")));
  EXPECT_EQ(meta.at("config").at("seed"), 7);
  EXPECT_EQ(meta.at("config").at("pages"), 15);

  std::ofstream(at("bad.json")) << R"({"pagez": 12})";
  EXPECT_EQ(run("--config " + at("bad.json") + " synth --out " + at("e")).code, 1);
}

}  // namespace
