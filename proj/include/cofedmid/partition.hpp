#pragma once

// Class-guided partition: per-round class subsets for the defender coalition
// with bounded pairwise overlap and complete label coverage, plus the decay
// schedule that shrinks the subset size over training.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cofedmid/errors.hpp"
#include "cofedmid/model.hpp"
#include "cofedmid/rng.hpp"

namespace cofedmid {

enum class DecaySchedule { kLinear, kCosine, kExp, kPoly };

struct CoalitionSpec {
  std::size_t coalition_size = 2;  // d
  std::size_t num_classes = 10;    // N
  std::size_t m_max = 10;
  std::size_t m_min = 2;
  DecaySchedule decay = DecaySchedule::kLinear;
  int rounds = 1;  // T

  void Validate() const {
    Require(coalition_size >= 1, "CoalitionSpec: coalition size must be >= 1");
    Require(m_min >= 1 && m_min <= m_max && m_max <= num_classes,
            "CoalitionSpec: need 1 <= m_min <= m_max <= N");
    Require(rounds >= 1, "CoalitionSpec: rounds must be >= 1");
  }
};

// max(0, ceil((d m^2 - N m) / (N (d - 1)))); 0 when d == 1.
inline int TheoreticalOverlapBound(std::size_t num_classes, std::size_t coalition_size,
                                   std::size_t m) {
  Require(num_classes >= 1 && m >= 1 && m <= num_classes,
          "TheoreticalOverlapBound: need 1 <= m <= N");
  if (coalition_size <= 1) return 0;
  const auto n = static_cast<long long>(num_classes);
  const auto d = static_cast<long long>(coalition_size);
  const auto mm = static_cast<long long>(m);
  const long long num = d * mm * mm - n * mm;
  const long long den = n * (d - 1);
  if (num <= 0) return 0;
  return static_cast<int>((num + den - 1) / den);
}

inline std::size_t DecaySubsetSize(const CoalitionSpec& spec, int t) {
  Require(t >= 1 && t <= spec.rounds, "DecaySubsetSize: round out of range");
  if (spec.rounds == 1) return spec.m_min;
  const auto span_rounds = static_cast<long long>(spec.rounds - 1);
  const auto elapsed = static_cast<long long>(t - 1);
  const auto hi = static_cast<long long>(spec.m_max);
  const auto lo = static_cast<long long>(spec.m_min);
  if (spec.decay == DecaySchedule::kLinear) {
    // floor(m_max - (m_max - m_min)(t-1)/(T-1)) in exact integer arithmetic.
    const long long value = (hi * span_rounds - (hi - lo) * elapsed) / span_rounds;
    return static_cast<std::size_t>(std::max(lo, value));
  }
  const double x = static_cast<double>(elapsed) / static_cast<double>(span_rounds);
  double frac = 0.0;
  switch (spec.decay) {
    case DecaySchedule::kCosine:
      frac = (1.0 + std::cos(std::numbers::pi * x)) / 2.0;
      break;
    case DecaySchedule::kExp: {
      const double floor_term = std::exp(-5.0);
      frac = (std::exp(-5.0 * x) - floor_term) / (1.0 - floor_term);
      break;
    }
    case DecaySchedule::kPoly:
      frac = (1.0 - x) * (1.0 - x);
      break;
    case DecaySchedule::kLinear:
      break;
  }
  const double value = static_cast<double>(lo) + static_cast<double>(hi - lo) * frac;
  const auto floored = static_cast<long long>(std::floor(value + 1e-9));
  return static_cast<std::size_t>(std::clamp(floored, lo, hi));
}

inline int MaxPairwiseOverlap(const std::vector<std::vector<int>>& subsets) {
  int worst = 0;
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    for (std::size_t j = i + 1; j < subsets.size(); ++j) {
      std::vector<int> common;
      std::set_intersection(subsets[i].begin(), subsets[i].end(), subsets[j].begin(),
                            subsets[j].end(), std::back_inserter(common));
      worst = std::max(worst, static_cast<int>(common.size()));
    }
  }
  return worst;
}

struct ClassAssignment {
  std::size_t subset_size = 0;
  std::vector<std::vector<int>> subsets;  // one sorted subset per coalition member
  int lambda = 0;                          // overlap bound the assignment satisfies
};

namespace detail {

// Randomized greedy: clients are filled one at a time; each picks classes in
// order of (current coalition frequency, seeded random rank), skipping any
// class whose inclusion would push an overlap with an earlier client above
// lambda.
inline bool TryGreedyAssignment(std::size_t num_classes, std::size_t coalition_size,
                                std::size_t m, int lambda, Rng& rng,
                                std::vector<std::vector<int>>& subsets) {
  std::vector<int> frequency(num_classes, 0);
  std::vector<std::vector<char>> member(coalition_size, std::vector<char>(num_classes, 0));
  subsets.assign(coalition_size, {});
  std::vector<int> rank(num_classes);
  std::vector<int> order(num_classes);
  for (std::size_t client = 0; client < coalition_size; ++client) {
    std::iota(rank.begin(), rank.end(), 0);
    std::shuffle(rank.begin(), rank.end(), rng);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (frequency[a] != frequency[b]) return frequency[a] < frequency[b];
      return rank[a] < rank[b];
    });
    std::vector<int> overlap(client, 0);
    auto& chosen = subsets[client];
    for (int c : order) {
      if (chosen.size() == m) break;
      bool fits = true;
      for (std::size_t prev = 0; prev < client && fits; ++prev) {
        if (member[prev][c] && overlap[prev] + 1 > lambda) fits = false;
      }
      if (!fits) continue;
      chosen.push_back(c);
      member[client][c] = 1;
      for (std::size_t prev = 0; prev < client; ++prev) overlap[prev] += member[prev][c];
    }
    if (chosen.size() < m) return false;
    for (int c : chosen) ++frequency[c];
    std::sort(chosen.begin(), chosen.end());
  }
  return true;
}

}  // namespace detail

// Attempts per overlap bound before lambda is relaxed by one.
inline constexpr int kAssignAttemptsPerBound = 16;

// Bounded class assignment for a fixed subset size. lambda starts at the
// theoretical bound and grows only when every attempt at the current bound
// fails; lambda == m always succeeds.
inline ClassAssignment AssignClassesWithSize(std::size_t num_classes,
                                             std::size_t coalition_size, std::size_t m,
                                             std::uint64_t seed) {
  Require(coalition_size >= 1, "AssignClasses: empty coalition");
  Require(m >= 1 && m <= num_classes, "AssignClasses: need 1 <= m <= N");
  if (coalition_size * m < num_classes) {
    throw ContractError("AssignClasses: coverage infeasible, d*m = " +
                        std::to_string(coalition_size * m) + " < N = " +
                        std::to_string(num_classes));
  }
  ClassAssignment out;
  out.subset_size = m;
  for (int lambda = TheoreticalOverlapBound(num_classes, coalition_size, m);
       lambda <= static_cast<int>(m); ++lambda) {
    for (int attempt = 0; attempt < kAssignAttemptsPerBound; ++attempt) {
      Rng rng(DeriveSeed(seed, "class-assign-attempt", lambda, attempt));
      if (detail::TryGreedyAssignment(num_classes, coalition_size, m, lambda, rng,
                                      out.subsets)) {
        out.lambda = lambda;
        return out;
      }
    }
  }
  throw std::logic_error("AssignClasses: no assignment at lambda = m");
}

inline ClassAssignment AssignClasses(const CoalitionSpec& spec, int t, std::uint64_t seed) {
  spec.Validate();
  const std::size_t m = DecaySubsetSize(spec, t);
  return AssignClassesWithSize(spec.num_classes, spec.coalition_size, m,
                               DeriveSeed(seed, "class-assign", -1, t));
}

// Per-round assignments for rounds 1..T, built once before training.
class ClassAssignmentSchedule {
 public:
  ClassAssignmentSchedule() = default;

  static ClassAssignmentSchedule Build(const CoalitionSpec& spec, std::uint64_t seed) {
    spec.Validate();
    ClassAssignmentSchedule schedule;
    schedule.rounds_.reserve(static_cast<std::size_t>(spec.rounds));
    for (int t = 1; t <= spec.rounds; ++t) schedule.rounds_.push_back(AssignClasses(spec, t, seed));
    return schedule;
  }

  int num_rounds() const { return static_cast<int>(rounds_.size()); }

  const ClassAssignment& round(int t) const {
    Require(t >= 1 && t <= num_rounds(), "ClassAssignmentSchedule: round out of range");
    return rounds_[static_cast<std::size_t>(t - 1)];
  }

  // Class subset of coalition member `position` (0-based within the coalition).
  const std::vector<int>& subset(int t, std::size_t position) const {
    return round(t).subsets.at(position);
  }

 private:
  std::vector<ClassAssignment> rounds_;
};

// Indices (into `samples`) of the samples whose label is in `classes`.
inline std::vector<std::size_t> SelectAssignedIndices(std::span<const Sample> samples,
                                                      std::span<const int> classes) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (std::find(classes.begin(), classes.end(), samples[i].label) != classes.end()) {
      out.push_back(i);
    }
  }
  return out;
}

inline std::vector<Sample> SelectAssignedSubset(std::span<const Sample> samples,
                                                std::span<const int> classes) {
  std::vector<Sample> out;
  for (std::size_t i : SelectAssignedIndices(samples, classes)) out.push_back(samples[i]);
  return out;
}

}  // namespace cofedmid
