#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cofedmid/attacks.hpp"
#include "cofedmid/data.hpp"
#include "cofedmid/fed.hpp"
#include "test_util.hpp"

namespace cofedmid {
namespace {

std::vector<TrajectoryRecord> Records(std::vector<std::vector<double>> values) {
  std::vector<TrajectoryRecord> out;
  for (auto& v : values) out.push_back({out.size(), Measurement::kLoss, std::move(v)});
  return out;
}

TEST(ScoreTest, LossSeries) {
  EXPECT_EQ(AttackLossSeries(Records({{2.0, 1.0, 0.0}})), (std::vector<double>{-1.0}));
  const auto s = AttackLossSeries(Records({{0.0, 0.0}, {1.0, 1.0}}));
  EXPECT_GT(s[0], s[1]);
  EXPECT_THROW(AttackLossSeries(Records({{}})), ContractError);
}

TEST(ScoreTest, AvgCosine) {
  EXPECT_NEAR(AttackAvgCosine(Records({{0.9, 0.5}}))[0], 0.4, 1e-15);
  EXPECT_EQ(AttackAvgCosine(Records({{0.3, 0.3, 0.3}}))[0], 0.0);
  EXPECT_THROW(AttackAvgCosine(Records({{0.3}})), ContractError);
}

TEST(ScoreTest, FtaSlopes) {
  EXPECT_DOUBLE_EQ(AttackFta(Records({{3.0, 2.0, 1.0}}), Measurement::kLoss)[0], 1.0);
  EXPECT_EQ(AttackFta(Records({{0.6, 0.6, 0.6}}), Measurement::kConfidence)[0], 0.0);
  const auto s = AttackFta(Records({{3.0, 2.0, 1.0}, {1.0, 1.0, 1.0}}), Measurement::kLoss);
  EXPECT_GT(s[0], s[1]);
  EXPECT_THROW(AttackFta(Records({{1.0}}), Measurement::kLoss), ContractError);
  EXPECT_THROW(AttackFta(Records({{1.0, 2.0}}), Measurement::kEntropy), ContractError);
}

TEST(ScoreTest, SlopeMatchesLeastSquaresOracle) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> y(2 + static_cast<std::size_t>(trial % 9));
    for (double& v : y) v = n(rng);
    // Normal equations for y = a + b x in closed form.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double x = static_cast<double>(i);
      sx += x;
      sy += y[i];
      sxx += x * x;
      sxy += x * y[i];
    }
    const double b = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    EXPECT_NEAR(TrajectorySlope(y), b, 1e-12);
  }
}

TEST(FedMiaTest, OutStatistics) {
  const auto [mean, sd] = OutStatistics(std::vector<double>{1.0, 3.0});
  EXPECT_EQ(mean, 2.0);
  EXPECT_EQ(sd, 1.0);
  EXPECT_EQ(OutStatistics(std::vector<double>{0.4, 0.4, 0.4}).second, kOutStdFloor);
}

TEST(FedMiaTest, ZScoreSum) {
  OutDistribution out{{2.0, 1.5, 1.0}, {0.5, 0.25, 0.1}};
  const std::vector<double> below = {1.5, 1.25, 0.9};
  EXPECT_NEAR(FedMiaScore(below, out, Measurement::kLoss), 3.0, 1e-12);
  EXPECT_EQ(FedMiaScore(out.mean, out, Measurement::kLoss), 0.0);
  EXPECT_NEAR(FedMiaScore(below, out, Measurement::kGradCosine), -3.0, 1e-12);
  EXPECT_THROW(FedMiaScore(std::vector<double>{1.0}, out, Measurement::kLoss), ContractError);
}

TEST(SelectorTest, Describe) {
  EXPECT_EQ(TargetSelector::Global().Describe(), "global");
  EXPECT_EQ(TargetSelector::Local(3).Describe(), "local:3");
  EXPECT_EQ(TargetSelector::CoalitionAggregate({4, 1}).Describe(), "coalition:1;4");
  EXPECT_EQ(TargetSelector::CoalitionAggregate({4, 1}).TargetClients(),
            (std::vector<std::size_t>{1, 4}));
}

TEST(AttackNameTest, RoundTrip) {
  for (AttackKind k : kAllAttacks) EXPECT_EQ(ParseAttackName(AttackName(k)), k);
  EXPECT_THROW(ParseAttackName("fedmia_3"), ContractError);
}

class HandStoreTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::mt19937_64 rng(12);
    store_ = SnapshotStore({30, 10, 20});
    for (int t : {1, 2, 3}) {
      Snapshot s;
      s.round = t;
      s.global = testing::RandomParams(spec_, rng);
      s.next_global = testing::RandomParams(spec_, rng);
      for (int k = 0; k < 3; ++k) s.locals.push_back(testing::RandomParams(spec_, rng));
      store_.Add(s);
    }
    for (int i = 0; i < 6; ++i) samples_.push_back(testing::RandomSample(spec_, rng));
  }

  ModelSpec spec_{3, 4, 3};
  SnapshotStore store_;
  std::vector<Sample> samples_;
};

TEST_F(HandStoreTest, OneValuePerRecordedRound) {
  const auto recs = ExtractTrajectories(spec_, store_, TargetSelector::Global(), samples_, {},
                                        Measurement::kLoss);
  ASSERT_EQ(recs.size(), samples_.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    ASSERT_EQ(recs[i].values.size(), 3u);
    EXPECT_EQ(recs[i].values[1], SampleLoss(spec_, store_.at(1).next_global, samples_[i]));
  }
}

TEST_F(HandStoreTest, MissingLocalIsAnError) {
  EXPECT_THROW(ExtractTrajectories(spec_, store_, TargetSelector::Local(5), samples_, {},
                                   Measurement::kLoss),
               ContractError);
}

TEST_F(HandStoreTest, CoalitionOfOneEqualsLocal) {
  AttackPool pool;
  pool.samples = samples_;
  pool.is_member = {1, 1, 1, 0, 0, 0};
  for (AttackKind k : {AttackKind::kLossSeries, AttackKind::kAvgCosine, AttackKind::kFtaC}) {
    const auto a = AttackAdaptiveCoalition(spec_, store_, {2}, pool, k);
    const auto b = RunAttack(spec_, store_, TargetSelector::Local(2), pool, k);
    EXPECT_EQ(a.scores, b.scores);
    EXPECT_EQ(a.auc, b.auc);
  }
}

TEST_F(HandStoreTest, CoalitionAggregateIsSizeWeighted) {
  const std::vector<std::size_t> pair = {0, 2};
  const ParamVector agg = CoalitionAggregate(store_, 1, pair);
  const auto& l = store_.at(1).locals;
  for (std::size_t i = 0; i < agg.size(); ++i) {
    EXPECT_NEAR(agg[i], 0.6 * l[0][i] + 0.4 * l[2][i], 1e-12);
  }
  SnapshotStore equal({5, 5});
  equal.Add(Snapshot{1, l[0], l[0], {l[0], l[1]}});
  const std::vector<std::size_t> both = {0, 1};
  const ParamVector mean = CoalitionAggregate(equal, 0, both);
  for (std::size_t i = 0; i < mean.size(); ++i) EXPECT_NEAR(mean[i], 0.5 * (l[0][i] + l[1][i]), 1e-12);
}

TEST_F(HandStoreTest, GradCosineOfDescentStepIsOne) {
  const Sample& s = samples_[0];
  const ParamVector start = store_.at(0).global;
  ParamVector model = start;
  const ParamVector g = PerSampleGrad(spec_, start, s);
  for (std::size_t i = 0; i < model.size(); ++i) model[i] -= 0.01 * g[i];
  EXPECT_NEAR(Measure(spec_, model, start, s, Measurement::kGradCosine), 1.0, 1e-12);
  EXPECT_EQ(Measure(spec_, start, start, s, Measurement::kGradCosine), 0.0);
}

TEST_F(HandStoreTest, OutDistributionNeedsTwoOtherClients) {
  const std::vector<std::size_t> two = {0, 1};
  EXPECT_THROW(BuildOutDistribution(spec_, store_, samples_[0], two, Measurement::kLoss),
               ContractError);
  const std::vector<std::size_t> one = {0};
  const auto out = BuildOutDistribution(spec_, store_, samples_[0], one, Measurement::kLoss);
  for (std::size_t r = 0; r < 3; ++r) {
    const double a = SampleLoss(spec_, store_.at(r).locals[1], samples_[0]);
    const double b = SampleLoss(spec_, store_.at(r).locals[2], samples_[0]);
    EXPECT_NEAR(out.mean[r], (a + b) / 2.0, 1e-12);
    EXPECT_NEAR(out.stddev[r], std::max(std::abs(a - b) / 2.0, kOutStdFloor), 1e-12);
  }
}

TEST_F(HandStoreTest, IdenticalOtherModelsGiveFlooredSpread) {
  SnapshotStore same({1, 1, 1});
  const auto& l = store_.at(0).locals;
  same.Add(Snapshot{1, l[0], l[0], {l[0], l[1], l[1]}});
  const std::vector<std::size_t> target = {0};
  const auto out = BuildOutDistribution(spec_, same, samples_[0], target, Measurement::kLoss);
  EXPECT_EQ(out.stddev[0], kOutStdFloor);
}

// Small clients on overlapping classes, trained long enough to memorize.
class OverfitRunTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SyntheticOptions opts;
    opts.num_classes = 4;
    opts.samples_per_class = 40;
    opts.input_dim = 20;
    opts.cluster_spread = 8.0;
    opts.seed = 9;
    data_ = new LabeledDataset(GenerateSynthetic(opts));
    plan_ = new PartitionPlan(PartitionIid(*data_, 5, 0.2, 9));
    FlConfig fl;
    fl.num_clients = 5;
    fl.rounds = 6;
    fl.lr = 0.1;
    fl.local_epochs = 30;
    fl.batch_size = 8;
    fl.snapshot_every = 1;
    fl.seed = 9;
    store_ = new SnapshotStore(
        RunTraining(spec_, fl, MakeClientDatasets(*data_, *plan_, fl), LabeledDataset{}).store);
  }
  static void TearDownTestSuite() {
    delete data_;
    delete plan_;
    delete store_;
  }

  static inline ModelSpec spec_{20, 64, 4};
  static inline LabeledDataset* data_ = nullptr;
  static inline PartitionPlan* plan_ = nullptr;
  static inline SnapshotStore* store_ = nullptr;
};

TEST_F(OverfitRunTest, FedMiaSeparatesMembers) {
  const EvalPools pools = BuildEvalPools(*plan_, 0, 20, 20, 20, 4);
  const AttackPool pool = MakeAttackPool(*data_, pools);
  const auto result = RunAttack(spec_, *store_, TargetSelector::Local(0), pool, AttackKind::kFedMiaI);
  EXPECT_GT(result.auc, 0.9);
}

TEST_F(OverfitRunTest, ShuffledLabelsGiveChanceAuc) {
  const EvalPools pools = BuildEvalPools(*plan_, 0, 20, 20, 20, 4);
  const AttackPool base = MakeAttackPool(*data_, pools);
  for (AttackKind kind : {AttackKind::kLossSeries, AttackKind::kFedMiaI}) {
    const auto scores = AttackScores(spec_, *store_, TargetSelector::Local(0), base.samples, kind);
    double mean_auc = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::vector<char> labels = base.is_member;
      std::mt19937_64 rng(seed);
      std::shuffle(labels.begin(), labels.end(), rng);
      mean_auc += RocAuc(scores, labels) / 20.0;
    }
    EXPECT_GE(mean_auc, 0.45) << AttackName(kind);
    EXPECT_LE(mean_auc, 0.55) << AttackName(kind);
  }
}

TEST_F(OverfitRunTest, PoolOrderAndLabels) {
  const EvalPools pools = BuildEvalPools(*plan_, 0, 20, 20, 20, 4);
  const AttackPool pool = MakeAttackPool(*data_, pools);
  ASSERT_EQ(pool.size(), 60u);
  EXPECT_EQ(std::accumulate(pool.is_member.begin(), pool.is_member.end(), 0), 20);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_TRUE(pool.is_member[i]);
    EXPECT_EQ(pool.ids[i], pools.members[i]);
  }
}

}  // namespace
}  // namespace cofedmid
