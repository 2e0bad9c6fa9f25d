#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "harness.hpp"
#include "test_util.hpp"

namespace hcbm::harness {
namespace {

namespace fs = std::filesystem;
using hcbm::testing::slurp;
using hcbm::testing::TempDir;

struct Invocation {
  int code = -1;
  std::string out;
  std::string err;
};

Invocation hcbm_cli(const TempDir& root, std::vector<std::string> args) {
  args.insert(args.begin(), {"--root", root.path().string(), "-q"});
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> generate_args(const fs::path& out, int per_class = 40) {
  return {"generate", "--shapes", "4", "--concepts", "5", "--s", "0.98", "--per-class", std::to_string(per_class),
          "--size", "16", "--seed", "5", "--out", out.string()};
}

std::size_t lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

TEST(Cli, UnknownFlagIsUsageError) {
  TempDir root("cli");
  auto args = generate_args(root / "ds");
  args.push_back("--no-such-flag");
  const auto r = hcbm_cli(root, args);
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(hcbm_cli(root, {}).code, kExitUsage);
}

TEST(Cli, InvalidValuesNameTheField) {
  TempDir root("cli");
  auto bad_s = generate_args(root / "ds");
  bad_s[6] = "1.5";
  const auto r = hcbm_cli(root, bad_s);
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("s must be"), std::string::npos) << r.err;
  auto bad_shapes = generate_args(root / "ds");
  bad_shapes[2] = "7";
  const auto r2 = hcbm_cli(root, bad_shapes);
  EXPECT_EQ(r2.code, kExitConfig);
  EXPECT_NE(r2.err.find("--shapes"), std::string::npos) << r2.err;
}

TEST(Cli, GenerateIsByteIdenticalAndRefusesCompletedRuns) {
  TempDir root("cli");
  ASSERT_EQ(hcbm_cli(root, generate_args(root / "a")).code, kExitOk);
  EXPECT_EQ(hcbm_cli(root, generate_args(root / "a")).code, kExitExists);
  auto again = generate_args(root / "b");
  again.insert(again.begin(), {"--run-id", "second"});
  ASSERT_EQ(hcbm_cli(root, again).code, kExitOk);
  EXPECT_EQ(slurp(root / "a/manifest.json"), slurp(root / "b/manifest.json"));
  EXPECT_EQ(slurp(root / "a/records.csv"), slurp(root / "b/records.csv"));
  std::size_t images = 0;
  for (const auto& e : fs::directory_iterator(root / "a/images")) {
    EXPECT_EQ(slurp(e.path()), slurp(root.path() / "b/images" / e.path().filename()));
    ++images;
  }
  EXPECT_EQ(images, 400u);
  EXPECT_FALSE(fs::exists(root / "a/INCOMPLETE"));
  EXPECT_TRUE(fs::exists(root / "a/replication.md"));

  auto forced = generate_args(root / "a");
  forced.push_back("--force");
  EXPECT_EQ(hcbm_cli(root, forced).code, kExitOk);

  const Ledger ledger(root.path());
  const auto entries = ledger.entries();
  ASSERT_EQ(entries.size(), 6u);
  EXPECT_EQ(ledger.last_status("second"), "completed");
}

TEST(Cli, TrainThenAttackConsumesCheckpoint) {
  TempDir root("cli");
  ASSERT_EQ(hcbm_cli(root, generate_args(root / "ds")).code, kExitOk);
  const auto t = hcbm_cli(root, {"train", "--dataset", (root / "ds").string(), "--variant", "cbm_res", "--epochs",
                                 "2", "--lr", "0.01", "--conv-widths", "4,4,8", "--hidden", "8", "--out",
                                 (root / "tr").string()});
  ASSERT_EQ(t.code, kExitOk) << t.err;
  for (const char* f : {"model.ckpt", "model.ckpt.json", "run.json", "epochs.csv", "config.json", "config.toml"}) {
    EXPECT_TRUE(fs::exists(root.path() / "tr" / f)) << f;
  }
  EXPECT_EQ(lines(slurp(root / "tr/epochs.csv")), 3u);

  const auto a = hcbm_cli(root, {"attack", "--method", "pgd", "--model-ckpt", (root / "tr/model.ckpt").string(),
                                 "--dataset", (root / "ds").string(), "--max-steps", "5", "--out",
                                 (root / "at").string()});
  // A barely trained model may classify nothing correctly; that is reported, not hidden.
  if (a.code == kExitOk) {
    const auto csv = slurp(root / "at/attacks.csv");
    EXPECT_EQ(csv.rfind("sample_id,status,iterations,linf_norm", 0), 0u);
    EXPECT_TRUE(fs::exists(root / "at/summary.json"));
  } else {
    EXPECT_NE(a.err.find("no correctly classified"), std::string::npos) << a.err;
  }

  const auto e = hcbm_cli(root, {"eval", "--model-ckpt", (root / "tr/model.ckpt").string(), "--dataset",
                                 (root / "ds").string(), "--out", (root / "ev").string()});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  const auto j = nlohmann::json::parse(slurp(root / "ev/eval.json"));
  EXPECT_EQ(j.at("n").get<int>(), 80);
  EXPECT_EQ(j.at("mpo").size(), 5u);
}

TEST(Cli, ConfigFileValuesYieldToFlags) {
  TempDir root("cli");
  ASSERT_EQ(hcbm_cli(root, generate_args(root / "ds", 20)).code, kExitOk);
  {
    std::ofstream cfg(root / "train.toml");
    cfg << "[train]\nepochs = 3\nlr = 0.02\nvariant = \"standard\"\nconv-widths = [4, 4, 4]\nhidden = 8\n";
  }
  const auto r = hcbm_cli(root, {"train", "--config", (root / "train.toml").string(), "--dataset",
                                 (root / "ds").string(), "--epochs", "1", "--out", (root / "tr").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto snap = nlohmann::json::parse(slurp(root / "tr/config.json"));
  EXPECT_EQ(snap["config"]["train"]["epochs"].get<int>(), 1);
  EXPECT_DOUBLE_EQ(snap["config"]["train"]["learning_rate"].get<double>(), 0.02);
  EXPECT_EQ(snap["config"]["model"]["variant"].get<std::string>(), "standard");
}

TEST(Cli, SubsetExperimentIsReproducibleAndExports) {
  TempDir root("cli");
  ASSERT_EQ(hcbm_cli(root, generate_args(root / "ds", 60)).code, kExitOk);
  auto subset = [&](const std::string& out, const std::string& threads) {
    // Same config, same run id: repeats need --force.
    return hcbm_cli(root, {"--force", "--threads", threads, "subset-experiment", "--dataset", (root / "ds").string(), "--sizes",
                           "20,30", "--variants", "standard,vanilla_cbm", "--seeds", "1,2", "--max-trials", "1",
                           "--epochs", "1", "--out", (root.path() / out).string()});
  };
  ASSERT_EQ(subset("s1", "1").code, kExitOk);
  ASSERT_EQ(subset("s2", "1").code, kExitOk);
  ASSERT_EQ(subset("s3", "3").code, kExitOk);
  const auto results = slurp(root / "s1/results.csv");
  EXPECT_EQ(results, slurp(root / "s2/results.csv"));
  EXPECT_EQ(results, slurp(root / "s3/results.csv"));
  EXPECT_EQ(lines(results), 1u + 2 * 2 * 2);

  const auto ex = hcbm_cli(root, {"export", "--results", (root / "s1").string()});
  ASSERT_EQ(ex.code, kExitOk) << ex.err;
  EXPECT_EQ(lines(slurp(root / "s1/plots/accuracy_vs_size.csv")), 1u + 4);
  // k rows per concept model and size; none for the standard model.
  EXPECT_EQ(lines(slurp(root / "s1/plots/mpo_vs_m.csv")), 1u + 5 * 2);

  const auto missing = hcbm_cli(root, {"export", "--results", (root / "s1").string(), "--seeds", "1,2,3", "--out",
                                       (root / "p2").string()});
  EXPECT_EQ(missing.code, kExitFailure);
  EXPECT_NE(missing.err.find("4 expected runs are missing"), std::string::npos) << missing.err;
  EXPECT_NE(missing.err.find("variant=vanilla_cbm size=30 seed=3"), std::string::npos);
}

TEST(Export, EmptyDirectoryListsEveryExpectedCell) {
  TempDir root("export");
  const auto s = export_plot_data(root.path(), root / "out", {models::Variant::scm, models::Variant::cbm_res},
                                  {50, 100}, {0, 1, 2});
  EXPECT_EQ(s.result_rows, 0u);
  EXPECT_EQ(s.missing.size(), 12u);
  EXPECT_FALSE(fs::exists(root / "out/accuracy_vs_size.csv"));
}

TEST(Export, FullGridShape) {
  TempDir root("export");
  const int k = 9;
  {
    std::ofstream csv(root / "results.csv");
    csv << "variant,subset_size,seed,test_accuracy";
    for (int m = 1; m <= k; ++m) csv << ",mpo_" << m;
    csv << '\n';
    for (const char* v : {"standard", "vanilla_cbm", "cbm_res", "cbm_skip", "scm"}) {
      for (int n : {50, 100, 150, 200, 250}) {
        for (int seed = 0; seed < 10; ++seed) {
          csv << v << ',' << n << ',' << seed << ',' << 0.5 + 0.01 * seed;
          for (int m = 1; m <= k; ++m) csv << ',' << (std::string(v) == "standard" ? "" : "0.1");
          csv << '\n';
        }
      }
    }
  }
  const auto s = export_plot_data(root.path(), root / "plots", {}, {}, {});
  EXPECT_EQ(s.result_rows, 250u);
  EXPECT_TRUE(s.missing.empty());
  EXPECT_EQ(s.accuracy_rows, 25u);
  EXPECT_EQ(s.mpo_rows, 4u * 5u * k);
  const auto acc = slurp(root / "plots/accuracy_vs_size.csv");
  // Mean of 0.50..0.59 is 0.545.
  EXPECT_NE(acc.find("cbm_res,50,10,0.545,"), std::string::npos) << acc;
}

TEST(Ledger, SkipsTornLinesAndTracksLatestStatus) {
  TempDir root("ledger");
  const Ledger l(root.path());
  l.append({"a", "train", "h", "started", "t0", "d"});
  l.append({"a", "train", "h", "failed", "t1", "d"});
  {
    std::ofstream torn(l.path(), std::ios::app);
    torn << "{\"run_id\": \"b\", \"sta";
    torn << '\n';
  }
  l.append({"a", "train", "h", "completed", "t2", "d"});
  EXPECT_EQ(l.entries().size(), 3u);
  EXPECT_EQ(l.last_status("a"), "completed");
  EXPECT_FALSE(l.last_status("b").has_value());
  EXPECT_EQ(config_hash({{"x", 1}}), config_hash({{"x", 1}}));
  EXPECT_NE(config_hash({{"x", 1}}), config_hash({{"x", 2}}));
}

TEST(RunScope, FailedRunsKeepTheMarker) {
  TempDir root("scope");
  {
    RunScope s({root.path(), "train", {{"a", 1}}, "", std::string("r1"), std::nullopt, false});
    EXPECT_TRUE(fs::exists(s.dir() / "INCOMPLETE"));
  }
  EXPECT_TRUE(fs::exists(root / "runs/r1/INCOMPLETE"));
  EXPECT_EQ(Ledger(root.path()).last_status("r1"), "failed");
  {
    RunScope s({root.path(), "train", {{"a", 1}}, "", std::string("r1"), std::nullopt, false});
    s.complete();
  }
  EXPECT_FALSE(fs::exists(root / "runs/r1/INCOMPLETE"));
  EXPECT_THROW(RunScope({root.path(), "train", {{"a", 1}}, "", std::string("r1"), std::nullopt, false}),
               RunExistsError);
  EXPECT_THROW(RunScope({root.path(), "train", {}, "", std::string("bad id"), std::nullopt, false}),
               InvalidConfigError);
}

}  // namespace
}  // namespace hcbm::harness
