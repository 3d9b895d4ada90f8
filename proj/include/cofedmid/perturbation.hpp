#pragma once

// Aggregation-neutral perturbation. Each coalition member adds one scalar to
// the tail of its parameter vector; the scalars are projected orthogonal to
// the aggregation weights so their weighted sum is zero.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iostream>
#include <random>
#include <span>
#include <vector>

#include "cofedmid/errors.hpp"
#include "cofedmid/model.hpp"
#include "cofedmid/rng.hpp"

namespace cofedmid {

// delta_k = base_k - w_k / |w|^2 * sum_j w_j base_j
inline std::vector<double> ProjectNeutral(std::span<const double> base,
                                          std::span<const double> weights) {
  Require(!base.empty() && base.size() == weights.size(),
          "ProjectNeutral: base and weights must have equal, non-zero length");
  double norm_sq = 0.0;
  double dot = 0.0;
  for (std::size_t k = 0; k < base.size(); ++k) {
    norm_sq += weights[k] * weights[k];
    dot += weights[k] * base[k];
  }
  if (norm_sq == 0.0) throw ContractError("ProjectNeutral: zero weight vector");
  std::vector<double> out(base.size());
  for (std::size_t k = 0; k < base.size(); ++k) {
    out[k] = base[k] - weights[k] / norm_sq * dot;
  }
  return out;
}

inline std::vector<double> SampleBaseNoise(std::size_t count, double sigma, Rng& rng) {
  Require(sigma >= 0.0, "SampleBaseNoise: sigma must be >= 0");
  std::vector<double> out(count, 0.0);
  if (sigma == 0.0) return out;
  std::normal_distribution<double> normal(0.0, sigma);
  for (double& v : out) v = normal(rng);
  return out;
}

// Number of tail entries that receive the shift: floor(ratio * P).
inline std::size_t PerturbedTailLength(std::size_t param_count, double ratio) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(param_count) + 1e-9));
}

inline ParamVector ApplyPerturbation(ParamVector params, double delta, double ratio) {
  Require(ratio > 0.0 && ratio <= 1.0, "ApplyPerturbation: ratio must be in (0,1]");
  const std::size_t tail = PerturbedTailLength(params.size(), ratio);
  if (tail == 0) {
    std::clog << "warning: perturbation ratio " << ratio << " selects no parameters of "
              << params.size() << "\n";
    return params;
  }
  for (std::size_t i = params.size() - tail; i < params.size(); ++i) params[i] += delta;
  return params;
}

// Max-coordinate gap between the weighted aggregates of the perturbed and the
// unperturbed parameter lists.
inline double VerifyCancellation(std::span<const ParamVector> perturbed,
                                 std::span<const ParamVector> unperturbed,
                                 std::span<const double> weights) {
  Require(perturbed.size() == unperturbed.size() && perturbed.size() == weights.size(),
          "VerifyCancellation: list sizes differ");
  if (perturbed.empty()) return 0.0;
  const std::size_t p = perturbed.front().size();
  double total = 0.0;
  for (double w : weights) total += w;
  Require(total > 0.0, "VerifyCancellation: weights must sum to a positive value");
  double residual = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    double a = 0.0;
    double b = 0.0;
    for (std::size_t k = 0; k < perturbed.size(); ++k) {
      Require(perturbed[k].size() == p && unperturbed[k].size() == p,
              "VerifyCancellation: parameter length mismatch");
      a += weights[k] * perturbed[k][i];
      b += weights[k] * unperturbed[k][i];
    }
    residual = std::max(residual, std::abs(a - b) / total);
  }
  return residual;
}

// Per-round neutral scalars for every coalition member, precomputed for all
// rounds from hash(seed, round).
class NoisePlan {
 public:
  NoisePlan() = default;

  static NoisePlan Precompute(std::span<const double> weights, double sigma, double ratio,
                              int rounds, std::uint64_t seed) {
    Require(!weights.empty(), "NoisePlan: empty coalition");
    for (double w : weights) Require(w > 0.0, "NoisePlan: weights must be positive");
    Require(sigma >= 0.0, "NoisePlan: sigma must be >= 0");
    Require(ratio > 0.0 && ratio <= 1.0, "NoisePlan: ratio must be in (0,1]");
    Require(sigma == 0.0 || weights.size() >= 2,
            "NoisePlan: a coalition of one cannot cancel non-zero noise");
    NoisePlan plan;
    plan.weights_.assign(weights.begin(), weights.end());
    plan.sigma_ = sigma;
    plan.ratio_ = ratio;
    for (int t = 1; t <= rounds; ++t) {
      Rng rng = MakeRng(seed, "perturbation", -1, t);
      const std::vector<double> base = SampleBaseNoise(weights.size(), sigma, rng);
      plan.deltas_.push_back(ProjectNeutral(base, weights));
    }
    return plan;
  }

  double sigma() const { return sigma_; }
  double ratio() const { return ratio_; }
  const std::vector<double>& weights() const { return weights_; }
  int num_rounds() const { return static_cast<int>(deltas_.size()); }

  const std::vector<double>& deltas(int round) const {
    Require(round >= 1 && round <= num_rounds(), "NoisePlan: round out of range");
    return deltas_[static_cast<std::size_t>(round - 1)];
  }
  double delta(int round, std::size_t position) const { return deltas(round).at(position); }

  // |sum_k w_k delta_k| for the round.
  double WeightedSum(int round) const {
    const auto& d = deltas(round);
    double sum = 0.0;
    for (std::size_t k = 0; k < d.size(); ++k) sum += weights_[k] * d[k];
    return std::abs(sum);
  }

 private:
  std::vector<double> weights_;
  double sigma_ = 0.0;
  double ratio_ = 1.0;
  std::vector<std::vector<double>> deltas_;
};

}  // namespace cofedmid
