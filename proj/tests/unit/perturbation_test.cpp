#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cofedmid/perturbation.hpp"

namespace cofedmid {
namespace {

TEST(ProjectNeutralTest, Examples) {
  const std::vector<double> w = {1.0, 1.0};
  EXPECT_EQ(ProjectNeutral(std::vector<double>{2.0, 0.0}, w), (std::vector<double>{1.0, -1.0}));
  EXPECT_EQ(ProjectNeutral(std::vector<double>{0.5, -0.5}, w), (std::vector<double>{0.5, -0.5}));
  EXPECT_EQ(ProjectNeutral(std::vector<double>{3.7}, std::vector<double>{4.0}),
            (std::vector<double>{0.0}));
}

TEST(ProjectNeutralTest, Errors) {
  EXPECT_THROW(ProjectNeutral(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0, 0.0}),
               ContractError);
  EXPECT_THROW(ProjectNeutral(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}),
               ContractError);
}

TEST(ProjectNeutralTest, WeightedSumVanishesAndProjectionIsIdempotent) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> weight(1.0, 500.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t d = 2 + static_cast<std::size_t>(trial % 9);
    std::vector<double> w(d), base(d);
    for (std::size_t k = 0; k < d; ++k) {
      w[k] = weight(rng);
      base[k] = noise(rng);
    }
    const auto delta = ProjectNeutral(base, w);
    double sum = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      sum += w[k] * delta[k];
      scale += w[k];
    }
    EXPECT_LE(std::abs(sum) / scale, 1e-12);
    const auto again = ProjectNeutral(delta, w);
    for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(again[k], delta[k], 1e-12);
  }
}

TEST(BaseNoiseTest, ZeroSigmaIsZero) {
  Rng rng(1);
  EXPECT_EQ(SampleBaseNoise(4, 0.0, rng), std::vector<double>(4, 0.0));
  EXPECT_THROW(SampleBaseNoise(4, -1.0, rng), ContractError);
}

TEST(ApplyPerturbationTest, TailOfTenAtQuarterRatio) {
  ParamVector p(10);
  const ParamVector out = ApplyPerturbation(p, 0.5, 0.25);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(out[i], 0.0);
  EXPECT_EQ(out[8], 0.5);
  EXPECT_EQ(out[9], 0.5);
}

TEST(ApplyPerturbationTest, FullRatioAndZeroDelta) {
  ParamVector p(std::vector<double>{1.0, 2.0, 3.0});
  EXPECT_EQ(ApplyPerturbation(p, -1.0, 1.0), ParamVector(std::vector<double>{0.0, 1.0, 2.0}));
  EXPECT_EQ(ApplyPerturbation(p, 0.0, 0.4), p);
}

TEST(ApplyPerturbationTest, EmptyTailIsANoOp) {
  ParamVector p(std::vector<double>{1.0, 2.0, 3.0});
  EXPECT_EQ(ApplyPerturbation(p, 5.0, 0.2), p);  // floor(0.6) = 0
  EXPECT_THROW(ApplyPerturbation(p, 5.0, 0.0), ContractError);
}

std::vector<ParamVector> RandomLocals(std::size_t d, std::size_t p, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<ParamVector> out;
  for (std::size_t k = 0; k < d; ++k) {
    ParamVector v(p);
    for (std::size_t i = 0; i < p; ++i) v[i] = n(rng);
    out.push_back(v);
  }
  return out;
}

TEST(CancellationTest, ProjectedNoiseCancelsUnprojectedDoesNot) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> weight(10.0, 200.0);
  int unprojected_large = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 + static_cast<std::size_t>(trial % 5);
    std::vector<double> w(d);
    for (double& x : w) x = weight(rng);
    const auto locals = RandomLocals(d, 40, rng);
    Rng noise_rng(static_cast<std::uint64_t>(trial));
    const auto base = SampleBaseNoise(d, 0.1, noise_rng);
    const auto delta = ProjectNeutral(base, w);
    std::vector<ParamVector> projected, raw;
    for (std::size_t k = 0; k < d; ++k) {
      projected.push_back(ApplyPerturbation(locals[k], delta[k], 0.2));
      raw.push_back(ApplyPerturbation(locals[k], base[k], 0.2));
    }
    EXPECT_LE(VerifyCancellation(projected, locals, w), 1e-8);
    if (VerifyCancellation(raw, locals, w) > 1e-3) ++unprojected_large;
  }
  EXPECT_GE(unprojected_large, 80);
}

TEST(CancellationTest, ZeroDeltaGivesZeroResidual) {
  std::mt19937_64 rng(3);
  const auto locals = RandomLocals(3, 12, rng);
  const std::vector<double> w = {1.0, 2.0, 3.0};
  EXPECT_EQ(VerifyCancellation(locals, locals, w), 0.0);
}

TEST(NoisePlanTest, DeterministicAndNeutralEveryRound) {
  const std::vector<double> w = {120.0, 80.0, 95.0};
  const auto a = NoisePlan::Precompute(w, 0.1, 0.2, 30, 5);
  const auto b = NoisePlan::Precompute(w, 0.1, 0.2, 30, 5);
  ASSERT_EQ(a.num_rounds(), 30);
  for (int t = 1; t <= 30; ++t) {
    EXPECT_EQ(a.deltas(t), b.deltas(t));
    EXPECT_LE(a.WeightedSum(t) / 295.0, 1e-12);
  }
  EXPECT_NE(a.deltas(1), a.deltas(2));
  EXPECT_THROW(a.deltas(31), ContractError);
}

TEST(NoisePlanTest, SingleMemberCannotCarryNoise) {
  const std::vector<double> w = {50.0};
  EXPECT_THROW(NoisePlan::Precompute(w, 1.0, 0.2, 3, 1), ContractError);
  const auto plan = NoisePlan::Precompute(w, 0.0, 0.2, 3, 1);
  EXPECT_EQ(plan.delta(2, 0), 0.0);
}

}  // namespace
}  // namespace cofedmid
