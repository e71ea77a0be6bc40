#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kCli = SHADOWSCOPE_CLI;
const fs::path kModel = fs::path(SHADOWSCOPE_SOURCE_DIR) / "models/default_svm_poly2.json";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root = fs::temp_directory_path() /
           ("shadowscope_cli_" + std::string(
                                     ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  void TearDown() override { fs::remove_all(root); }

  // Exit status of the CLI with `args`; stderr goes to a log file.
  int run(const std::string& args) {
    const std::string cmd = "'" + kCli + "' " + args + " >>'" + (root / "log.txt").string() +
                            "' 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string p(const std::string& name) const { return "'" + (root / name).string() + "'"; }

  static std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  // Concatenated contents of every file in `dir` whose name ends in `suffix`.
  static std::string contents(const fs::path& dir, const std::string& suffix) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (name.size() >= suffix.size() && name.ends_with(suffix)) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string out;
    for (const auto& f : files) out += f.filename().string() + "\n" + slurp(f);
    return out;
  }

  static std::size_t count_suffix(const fs::path& dir, const std::string& suffix) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
      n += e.path().filename().string().ends_with(suffix) ? 1 : 0;
    }
    return n;
  }

  fs::path root;
};

}  // namespace

TEST_F(Cli, GenerateThenDetectWritesOneFilePerScene) {
  ASSERT_EQ(run("generate --scenes 3 --seed 5 --out " + p("gen")), 0);
  EXPECT_EQ(count_suffix(root / "gen", ".bin"), 3u);
  EXPECT_TRUE(fs::exists(root / "gen/manifest.json"));
  ASSERT_EQ(run("detect --scenes " + p("gen") + " --model '" + kModel.string() + "' --out " +
                p("det")),
            0);
  EXPECT_EQ(count_suffix(root / "det", ".verdicts.jsonl"), 3u);
  const auto verdicts = contents(root / "det", ".verdicts.jsonl");
  EXPECT_NE(verdicts.find("\"verdict\":\"genuine\""), std::string::npos);
  EXPECT_EQ(verdicts.find("ghost-attack"), std::string::npos);
  const auto manifest = slurp(root / "det/manifest.json");
  EXPECT_NE(manifest.find("\"command\""), std::string::npos);
  EXPECT_NE(manifest.find("\"threshold\""), std::string::npos);
}

TEST_F(Cli, InvalidThresholdIsConfigError) {
  ASSERT_EQ(run("generate --scenes 1 --out " + p("gen")), 0);
  EXPECT_EQ(run("detect --scenes " + p("gen") + " --model '" + kModel.string() +
                "' --threshold 1.5 --out " + p("det")),
            1);
  EXPECT_FALSE(fs::exists(root / "det"));
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("detect --bogus-flag --out " + p("x")), 1);
  EXPECT_EQ(run("no-such-command"), 1);
  EXPECT_EQ(run("generate --scenes 1"), 1);  // --out missing
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, DataErrorsExitTwoAndLeaveNoPartialOutput) {
  ASSERT_EQ(run("generate --scenes 2 --out " + p("gen")), 0);
  // Truncate one cloud to a length that is not a whole number of records.
  const auto bin = root / "gen/scene_00001.bin";
  fs::resize_file(bin, fs::file_size(bin) - 5);
  EXPECT_EQ(run("detect --scenes " + p("gen") + " --model '" + kModel.string() + "' --out " +
                p("det")),
            2);
  EXPECT_FALSE(fs::exists(root / "det"));
  for (const auto& e : fs::directory_iterator(root)) {
    EXPECT_EQ(e.path().filename().string().find(".partial"), std::string::npos);
  }
}

TEST_F(Cli, RefusesToClobberOutput) {
  ASSERT_EQ(run("generate --scenes 1 --out " + p("gen")), 0);
  const auto before = contents(root / "gen", ".bin");
  EXPECT_EQ(run("generate --scenes 1 --seed 9 --out " + p("gen")), 1);
  EXPECT_EQ(contents(root / "gen", ".bin"), before);
  EXPECT_EQ(run("generate --scenes 1 --seed 9 --overwrite --out " + p("gen")), 0);
  EXPECT_NE(contents(root / "gen", ".bin"), before);
}

TEST_F(Cli, InjectDetectIsByteIdenticalAcrossRunsAndJobs) {
  ASSERT_EQ(run("generate --scenes 4 --seed 21 --out " + p("gen")), 0);
  const auto gen_before = contents(root / "gen", ".bin");
  for (const std::string tag : {"a", "b"}) {
    ASSERT_EQ(run("inject --scenes " + p("gen") +
                  " --class car --range 6 --angle-deg 0 --seed 3 --out " + p("inj_" + tag)),
              0);
  }
  EXPECT_EQ(contents(root / "inj_a", ".bin"), contents(root / "inj_b", ".bin"));
  EXPECT_EQ(contents(root / "inj_a", ".attack.json"), contents(root / "inj_b", ".attack.json"));
  EXPECT_EQ(contents(root / "gen", ".bin"), gen_before);  // inputs untouched

  const std::string model = " --model '" + kModel.string() + "'";
  ASSERT_EQ(run("detect --scenes " + p("inj_a") + model + " --jobs 1 --out " + p("d1")), 0);
  ASSERT_EQ(run("detect --scenes " + p("inj_b") + model + " --jobs 3 --out " + p("d3")), 0);
  const auto v1 = contents(root / "d1", ".verdicts.jsonl");
  EXPECT_EQ(v1, contents(root / "d3", ".verdicts.jsonl"));
  EXPECT_NE(v1.find("ghost-attack"), std::string::npos);
}

TEST_F(Cli, ReplayReproducesOutputs) {
  ASSERT_EQ(run("generate --scenes 2 --seed 8 --out " + p("gen")), 0);
  ASSERT_EQ(run("poison --scenes " + p("gen") + " --seed 4 --out " + p("pois")), 0);
  ASSERT_EQ(run("replay " + p("pois/manifest.json") + " --out " + p("again")), 0);
  EXPECT_EQ(contents(root / "pois", ".bin"), contents(root / "again", ".bin"));
  EXPECT_EQ(contents(root / "pois", ".attack.json"), contents(root / "again", ".attack.json"));
  EXPECT_EQ(contents(root / "pois", ".labels"), contents(root / "again", ".labels"));
}

TEST_F(Cli, AnalysisSubcommandsProduceTables) {
  ASSERT_EQ(run("generate --scenes 6 --seed 2 --out " + p("gen")), 0);
  ASSERT_EQ(run("poison --scenes " + p("gen") + " --out " + p("pois")), 0);
  const std::string model = " --model '" + kModel.string() + "'";
  EXPECT_EQ(run("sweep --scenes " + p("pois") + " --thresholds 0:1:0.25 --out " + p("sweep")), 0);
  EXPECT_TRUE(fs::exists(root / "sweep/roc.csv"));
  EXPECT_TRUE(fs::exists(root / "sweep/auc.csv"));
  EXPECT_EQ(run("density --scenes " + p("gen") + " --mode bbox --out " + p("dens")), 0);
  EXPECT_TRUE(fs::exists(root / "dens/density.csv"));
  EXPECT_EQ(run("lpd --scenes " + p("pois") + " --out " + p("lpd")), 0);
  EXPECT_TRUE(fs::exists(root / "lpd/lpd.csv"));
  EXPECT_EQ(run("bench --scenes " + p("pois") + model + " --out " + p("bench")), 0);
  const auto timing = slurp(root / "bench/timing_summary.csv");
  EXPECT_NE(timing.find("genuine"), std::string::npos);
  EXPECT_NE(timing.find("attacked"), std::string::npos);
  EXPECT_EQ(run("features --scenes " + p("pois") + " --out " + p("feat")), 0);
  const auto csv = slurp(root / "feat/features.csv");
  EXPECT_EQ(csv.rfind("scene_id,object_id,class,label,n_clusters,rho_c\n", 0), 0u);
  EXPECT_EQ(run("train --features " + p("feat/features.csv") + " --classifier logistic --out " +
                p("train")),
            0);
  EXPECT_TRUE(fs::exists(root / "train/model.json"));
  EXPECT_EQ(run("moc --model " + p("train/model.json") + " --out " + p("moc")), 0);
  EXPECT_TRUE(fs::exists(root / "moc/moc.csv"));
  EXPECT_TRUE(fs::exists(root / "moc/evasion.csv"));
}
