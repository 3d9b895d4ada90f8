#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cofedmid/config.hpp"
#include "cofedmid/experiment.hpp"
#include "cofedmid/snapshot_io.hpp"

namespace cofedmid {
namespace {

namespace fs = std::filesystem;

constexpr const char* kSmall =
    "seed = 5\n"
    "data.source = synthetic\n"
    "data.num_classes = 4\n"
    "data.samples_per_class = 30\n"
    "data.input_dim = 6\n"
    "model.hidden_dim = 8\n"
    "fl.K = 4\n"
    "fl.T = 6\n"
    "fl.batch_size = 8\n"
    "fl.snapshot_every = 2\n"
    "defense.kind = cofedmid\n"
    "defense.coalition = 0;2\n"
    "compensation.t0 = 2\n"
    "compensation.M = 4\n"
    "eval.members = 8\n"
    "eval.nonmembers_ifl = 4\n"
    "eval.nonmembers_ofl = 4\n"
    "attacks.list = loss_series;avg_cosine;fedmia_1;fedmia_2;fta_c;fta_l\n"
    "attacks.adaptive = true\n"
    "run.baseline = true\n";

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> Lines(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

class ExperimentTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("cofedmid_experiment_" + std::string(
                 ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  ExperimentConfig Config(const std::string& sub) const {
    ExperimentConfig c = ParseConfigText(kSmall);
    c.output_dir = (root_ / sub).string();
    return c;
  }

  fs::path root_;
};

TEST_F(ExperimentTest, WritesEveryOutputWithExpectedRows) {
  const ExperimentConfig c = Config("a");
  const auto rows = RunExperiment(c);
  const fs::path dir(c.output_dir);
  for (const char* f : {"rounds.csv", "compensation.csv", "assignments.csv", "attacks.csv",
                        "summary.csv", "snapshots.bin", "config.txt"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto rounds = Lines(dir / "rounds.csv");
  EXPECT_EQ(rounds.front(), kRoundsHeader);
  EXPECT_EQ(rounds.size(), 1u + 6);
  const auto assignments = Lines(dir / "assignments.csv");
  EXPECT_EQ(assignments.front(), kAssignmentsHeader);
  EXPECT_EQ(assignments.size(), 1u + 6 * 2);
  const auto compensation = Lines(dir / "compensation.csv");
  EXPECT_EQ(compensation.front(), kCompensationHeader);
  EXPECT_EQ(compensation.size(), 1u + 6 * 2);
  // Two locals plus the coalition aggregate, six attacks each.
  EXPECT_EQ(Lines(dir / "attacks.csv").size(), 1u + 3 * 6);
  const auto summary = Lines(dir / "summary.csv");
  EXPECT_EQ(summary.front(), kSummaryHeader);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].defense, "none");
  EXPECT_EQ(rows[1].defense, "cofedmid");
  ASSERT_TRUE(rows[1].acc_delta.has_value());
  EXPECT_DOUBLE_EQ(*rows[1].acc_delta, rows[1].final_test_acc - rows[0].final_test_acc);
  EXPECT_TRUE(fs::exists(dir / "baseline" / "attacks.csv"));
  EXPECT_EQ(Lines(dir / "baseline" / "assignments.csv").size(), 1u);
}

TEST_F(ExperimentTest, RerunIsByteIdentical) {
  const ExperimentConfig a = Config("a");
  ExperimentConfig b = Config("b");
  RunExperiment(a);
  RunExperiment(b);
  for (const char* f : {"rounds.csv", "compensation.csv", "assignments.csv", "attacks.csv",
                        "summary.csv", "snapshots.bin"}) {
    EXPECT_EQ(Slurp(fs::path(a.output_dir) / f), Slurp(fs::path(b.output_dir) / f)) << f;
  }
}

TEST_F(ExperimentTest, ThreadCountDoesNotChangeOutputs) {
  const ExperimentConfig a = Config("a");
  ExperimentConfig b = Config("b");
  b.fl.threads = 3;
  RunExperiment(a);
  RunExperiment(b);
  for (const char* f : {"rounds.csv", "compensation.csv", "assignments.csv", "attacks.csv",
                        "summary.csv", "snapshots.bin"}) {
    EXPECT_EQ(Slurp(fs::path(a.output_dir) / f), Slurp(fs::path(b.output_dir) / f)) << f;
  }
}

TEST_F(ExperimentTest, EmptyAttackListGivesHeaderOnly) {
  ExperimentConfig c = Config("a");
  c.attacks.clear();
  c.baseline = false;
  const auto rows = RunExperiment(c);
  EXPECT_EQ(Lines(fs::path(c.output_dir) / "attacks.csv"),
            (std::vector<std::string>{kAttacksHeader}));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_FALSE(rows[0].mean_attack_auc.has_value());
  EXPECT_FALSE(rows[0].acc_delta.has_value());
}

TEST_F(ExperimentTest, UndefendedRunAttacksTheGlobalModel) {
  ExperimentConfig c = Config("a");
  c.fl.defense.kind = DefenseKind::kNone;
  c.fl.coalition.clear();
  c.attacks = {"loss_series"};
  RunExperiment(c);
  const auto attacks = Lines(fs::path(c.output_dir) / "attacks.csv");
  ASSERT_EQ(attacks.size(), 2u);
  EXPECT_NE(attacks[1].find("global"), std::string::npos);
  EXPECT_FALSE(fs::exists(fs::path(c.output_dir) / "baseline"));
}

TEST_F(ExperimentTest, SplitCommandsMatchOneShotRun) {
  ExperimentConfig one = Config("one");
  one.baseline = false;
  ExperimentConfig split = Config("split");
  split.baseline = false;
  RunExperiment(one);
  const PreparedData data = PrepareData(split);
  TrainAndWrite(split, data, split.output_dir);
  const SnapshotStore store = LoadSnapshots((fs::path(split.output_dir) / kSnapshotFile).string());
  AttackAndWrite(split, data, store, split.output_dir);
  WriteReport(split);
  for (const char* f : {"attacks.csv", "summary.csv"}) {
    EXPECT_EQ(Slurp(fs::path(one.output_dir) / f), Slurp(fs::path(split.output_dir) / f)) << f;
  }
}

TEST_F(ExperimentTest, SnapshotFileRoundTrip) {
  const ExperimentConfig c = Config("a");
  const PreparedData data = PrepareData(c);
  const TrainingResult trained = TrainExperiment(c, data);
  fs::create_directories(root_);
  const std::string path = (root_ / "s.bin").string();
  SaveSnapshots(trained.store, path);
  const SnapshotStore loaded = LoadSnapshots(path);
  EXPECT_EQ(loaded.snapshots(), trained.store.snapshots());
  EXPECT_EQ(loaded.client_sizes(), trained.store.client_sizes());
  std::ofstream(path, std::ios::binary) << "garbage";
  EXPECT_ANY_THROW(LoadSnapshots(path));
}

TEST_F(ExperimentTest, AutomaticPartitionSizes) {
  ExperimentConfig c = Config("a");
  const FlConfig fl = ResolveFlConfig(c, 4);
  EXPECT_EQ(fl.defense.m_max, 4u);
  EXPECT_EQ(fl.defense.m_min, 2u);
  EXPECT_EQ(fl.seed, 5u);
  c.fl.coalition = {0, 1, 2};
  EXPECT_EQ(ResolveFlConfig(c, 10).defense.m_min, 4u);
}

TEST(OverheadTest, Examples) {
  EXPECT_EQ(CommOverheadEstimate(200, 100), 20200u);
  EXPECT_EQ(CommOverheadEstimate(200, 0), 0u);
  EXPECT_EQ(CommOverheadEstimate(10, 100), 1200u);
}

}  // namespace
}  // namespace cofedmid
