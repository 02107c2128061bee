#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "metairl/cli.hpp"

using namespace metairl;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"({
  "demos_per_task": 6,
  "eval": {"episodes": 4, "demo_budgets": [2, 4, 6]},
  "meta": {
    "meta_iterations": 3,
    "adapt_iterations": 1,
    "online_test_every": 2,
    "checkpoint_every": 2,
    "network": {"hidden": [8]},
    "airl": {"k_d": 2, "episodes_per_iteration": 2, "disc_batch": 16, "metric_pairs": 50}
  }
})";

struct Result {
  int code;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / ("metairl_cli_" + std::to_string(::getpid()) + "_" + info->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(root_ / "tiny.json") << kTinyConfig;
  }
  void TearDown() override { fs::remove_all(root_); }

  Result run(std::vector<std::string> args) {
    std::vector<std::string> full = {"metairl", "-c", (root_ / "tiny.json").string(), "-o", (root_ / "out").string()};
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : full) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
  }

  fs::path out(const std::string& rel) const { return root_ / "out" / rel; }

  std::string read(const fs::path& p) const {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  int lines(const fs::path& p) const {
    const std::string s = read(p);
    return static_cast<int>(std::count(s.begin(), s.end(), '\n'));
  }

  void make_demos() {
    for (const char* style : {"conservative", "neutral", "aggressive"}) {
      ASSERT_EQ(run({"gen-demos", "--style", style}).code, 0) << style;
    }
  }

  fs::path root_;
};

}  // namespace

TEST_F(CliTest, GenDemosIsReproducible) {
  ASSERT_EQ(run({"gen-demos", "--style", "neutral", "--count", "5", "--seed", "1", "--out",
                 (root_ / "a.demos").string()})
                .code,
            0);
  ASSERT_EQ(run({"gen-demos", "--style", "neutral", "--count", "5", "--seed", "1", "--out",
                 (root_ / "b.demos").string()})
                .code,
            0);
  EXPECT_EQ(read(root_ / "a.demos"), read(root_ / "b.demos"));
  EXPECT_EQ(load_dataset(root_ / "a.demos").trajectories.size(), 5u);
}

TEST_F(CliTest, UsageErrorsExitWithTwo) {
  auto r = run({"gen-demos", "--style", "reckless"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("reckless"), std::string::npos);
  EXPECT_EQ(run({"gen-demos", "--style", "neutral", "--count", "0"}).code, cli::kExitUsage);
  EXPECT_FALSE(fs::exists(out("demos/neutral.demos")));
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"adapt"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"evaluate", "--oracle", "--checkpoint", "x"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
}

TEST_F(CliTest, BadConfigIsAUsageError) {
  std::ofstream(root_ / "bad.json") << R"({"meta": {"beta_disc": 2.0}})";
  std::ofstream(root_ / "typo.json") << R"({"meta": {"beta_dsic": 0.5}})";
  for (const char* name : {"bad.json", "typo.json"}) {
    std::vector<std::string> argv_s = {"metairl", "-c", (root_ / name).string(), "show-config"};
    std::vector<const char*> argv;
    for (const auto& a : argv_s) argv.push_back(a.c_str());
    std::ostringstream o, e;
    EXPECT_EQ(cli::run(static_cast<int>(argv.size()), argv.data(), o, e), cli::kExitUsage) << name;
  }
}

TEST_F(CliTest, ShowConfigRoundTrips) {
  const auto r = run({"show-config"});
  ASSERT_EQ(r.code, 0);
  const RunConfig parsed = parse_config(r.out);
  EXPECT_EQ(parsed.meta.meta_iterations, 3);
  EXPECT_EQ(parsed.demos_per_task, 6);
  EXPECT_EQ(render_config(parsed), r.out);
}

TEST_F(CliTest, MissingDemosFailWithoutCheckpoint) {
  const auto r = run({"meta-train"});
  EXPECT_EQ(r.code, cli::kExitRuntime);
  EXPECT_NE(r.err.find("conservative.demos"), std::string::npos);
  EXPECT_NE(r.err.find("neutral.demos"), std::string::npos);
  EXPECT_FALSE(fs::exists(out("checkpoints")));
}

TEST_F(CliTest, SingleIterationSingleTask) {
  make_demos();
  const auto r = run({"meta-train", "--iterations", "1", "--tasks", "conservative"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::vector<fs::path> ckpts;
  for (const auto& e : fs::directory_iterator(out("checkpoints"))) ckpts.push_back(e.path());
  ASSERT_EQ(ckpts.size(), 1u);
  EXPECT_EQ(ckpts[0].filename(), "meta_final.ckpt");
  const Checkpoint c = load_checkpoint(ckpts[0]);
  EXPECT_EQ(c.iteration, 1);
  EXPECT_EQ(c.tasks, std::vector<std::string>{"conservative"});
  // One meta iteration: N = 2 inner runs of K = 1 iteration each.
  EXPECT_EQ(lines(out("metrics/meta_train.csv")), 1 + 2);
  const std::string csv = read(out("metrics/meta_train.csv"));
  EXPECT_EQ(csv.rfind(metrics_csv_header(), 0), 0u);
  EXPECT_EQ(csv.find("neutral"), std::string::npos);
}

TEST_F(CliTest, OnlineTestAndPeriodicCheckpoints) {
  make_demos();
  ASSERT_EQ(run({"meta-train"}).code, 0);
  EXPECT_TRUE(fs::exists(out("checkpoints/meta_00002.ckpt")));
  EXPECT_TRUE(fs::exists(out("checkpoints/meta_final.ckpt")));
  const std::string csv = read(out("metrics/meta_train.csv"));
  EXPECT_NE(csv.find("\nonline,1,0,aggressive,"), std::string::npos);
  EXPECT_EQ(lines(out("metrics/meta_train.csv")), 1 + 3 * 2 + 1);
}

TEST_F(CliTest, ResumeFromPeriodicCheckpoint) {
  make_demos();
  ASSERT_EQ(run({"meta-train"}).code, 0);
  const std::string full_ckpt = read(out("checkpoints/meta_final.ckpt"));
  const std::string full_csv = read(out("metrics/meta_train.csv"));
  fs::copy_file(out("checkpoints/meta_00002.ckpt"), root_ / "k2.ckpt");
  fs::remove(out("checkpoints/meta_final.ckpt"));

  const auto r = run({"meta-train", "--resume", (root_ / "k2.ckpt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read(out("checkpoints/meta_final.ckpt")), full_ckpt);
  EXPECT_EQ(read(out("metrics/meta_train.csv")), full_csv);

  // Resuming a finished run is a no-op.
  const auto again = run({"meta-train", "--resume", out("checkpoints/meta_final.ckpt").string()});
  EXPECT_EQ(again.code, 0);
  EXPECT_NE(again.out.find("nothing to do"), std::string::npos);
}

TEST_F(CliTest, CorruptCheckpointIsRejected) {
  make_demos();
  ASSERT_EQ(run({"meta-train", "--iterations", "1"}).code, 0);
  std::string bytes = read(out("checkpoints/meta_final.ckpt"));
  bytes[bytes.size() / 2] ^= 0x5a;
  std::ofstream(root_ / "bad.ckpt", std::ios::binary) << bytes;
  const auto r = run({"adapt", "--checkpoint", (root_ / "bad.ckpt").string()});
  EXPECT_EQ(r.code, cli::kExitRuntime);
  EXPECT_NE(r.err.find("checksum"), std::string::npos);
  EXPECT_EQ(run({"meta-train", "--resume", (root_ / "bad.ckpt").string()}).code, cli::kExitRuntime);
}

TEST_F(CliTest, AdaptBudgetsAndZeroIterations) {
  make_demos();
  ASSERT_EQ(run({"meta-train", "--iterations", "1", "--no-online"}).code, 0);
  const std::string meta = out("checkpoints/meta_final.ckpt").string();

  auto r = run({"adapt", "--checkpoint", meta, "--budgets", "all"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* name : {"meta_airl_b002", "meta_airl_b004", "meta_airl_b006"}) {
    const Checkpoint c = load_checkpoint(out(std::string("checkpoints/") + name + ".ckpt"));
    EXPECT_EQ(c.kind, "adapted");
    EXPECT_EQ(c.tasks, std::vector<std::string>{"aggressive"});
  }
  EXPECT_EQ(load_checkpoint(out("checkpoints/meta_airl_b004.ckpt")).demo_count, 4);
  EXPECT_EQ(lines(out("metrics/adaptation.csv")), 1 + 3);
  EXPECT_EQ(lines(out("metrics/adapt_meta_airl.csv")), 1 + 3);  // one adaptation iteration per budget

  r = run({"adapt", "--from-scratch", "--budgets", "2,4"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_checkpoint(out("checkpoints/scratch_b002.ckpt")).kind, "scratch");
  EXPECT_EQ(lines(out("metrics/adaptation.csv")), 1 + 5);

  r = run({"adapt", "--checkpoint", meta, "--iterations", "0", "--budgets", "2", "--no-eval", "--out",
           (root_ / "same.ckpt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_checkpoint(root_ / "same.ckpt").params, load_checkpoint(meta).params);

  EXPECT_EQ(run({"adapt", "--checkpoint", meta, "--budgets", "7"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"adapt", "--checkpoint", meta, "--budgets", "2,4", "--out", "x.ckpt"}).code, cli::kExitUsage);
}

TEST_F(CliTest, PretrainEvaluateCompare) {
  make_demos();
  auto r = run({"pretrain", "--iterations", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Checkpoint p = load_checkpoint(out("checkpoints/pretrain.ckpt"));
  EXPECT_EQ(p.kind, "pretrain");
  EXPECT_EQ(lines(out("metrics/pretrain.csv")), 1 + 2);

  r = run({"evaluate", "--oracle", "--style", "neutral"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(out("eval/oracle_neutral.csv")), 2);
  const auto ej = nlohmann::json::parse(read(out("eval/oracle_neutral.json")));
  EXPECT_EQ(ej.at("metrics").at("success_ratio"), 1.0);
  EXPECT_EQ(ej.at("histograms").size(), 4u);

  r = run({"evaluate", "--checkpoint", out("checkpoints/pretrain.ckpt").string(), "--name", "pt"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out("eval/pt.json")));

  r = run({"compare", "--model", "pretrain=" + out("checkpoints/pretrain.ckpt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(out("compare/compare.csv")), 2);
  const auto cj = nlohmann::json::parse(read(out("compare/compare.json")));
  EXPECT_EQ(cj.at("models").size(), 1u);
  EXPECT_EQ(cj.at("task"), "aggressive");
  EXPECT_NE(r.out.find("pretrain"), std::string::npos);

  EXPECT_EQ(run({"compare", "--model", "nopath"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"compare", "--model", "x=" + (root_ / "missing.ckpt").string()}).code, cli::kExitRuntime);
}

TEST(CliHelpers, NamesAndTruncation) {
  EXPECT_EQ(cli::meta_checkpoint_name(50), "meta_00050");
  EXPECT_EQ(cli::adapted_checkpoint_name("meta_airl", 10), "meta_airl_b010");
  EXPECT_EQ(cli::split_list("a,,b,"), (std::vector<std::string>{"a", "b"}));

  const fs::path p = fs::temp_directory_path() / ("metairl_trunc_" + std::to_string(::getpid()) + ".csv");
  std::ofstream(p) << "phase,meta_iteration,x\ntrain,0,1\ntrain,1,2\nonline,1,3\ntrain,2,4\n";
  cli::truncate_metrics(p, 2);
  std::ifstream in(p);
  const std::string s{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  EXPECT_EQ(s, "phase,meta_iteration,x\ntrain,0,1\ntrain,1,2\nonline,1,3\n");
  fs::remove(p);
}
