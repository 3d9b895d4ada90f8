#pragma once

// Membership inference evaluation: rank-statistic AUC and TPR at fixed FPR.
// Scores follow the convention "higher = more likely member".

#include <algorithm>
#include <array>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cofedmid/errors.hpp"

namespace cofedmid {

inline constexpr std::array<double, 3> kReportedFprs = {0.001, 0.01, 0.1};

struct TprAtFpr {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct AttackResult {
  std::string attack;
  std::string target;
  std::vector<double> scores;
  std::vector<char> is_member;
  double auc = 0.5;
  std::vector<TprAtFpr> tpr_at_fpr;
  std::size_t n_members = 0;
  std::size_t n_nonmembers = 0;
};

namespace detail {

inline void CountClasses(std::span<const char> is_member, std::size_t& pos, std::size_t& neg) {
  pos = static_cast<std::size_t>(std::count_if(is_member.begin(), is_member.end(),
                                               [](char m) { return m != 0; }));
  neg = is_member.size() - pos;
}

}  // namespace detail

// Mann-Whitney U / (n_pos * n_neg) with mid-ranks, so ties count 1/2.
inline double RocAuc(std::span<const double> scores, std::span<const char> is_member) {
  Require(scores.size() == is_member.size(), "RocAuc: size mismatch");
  std::size_t pos = 0, neg = 0;
  detail::CountClasses(is_member, pos, neg);
  Require(pos > 0 && neg > 0, "RocAuc: both members and non-members are required");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double member_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t r = i; r < j; ++r) {
      if (is_member[order[r]]) member_rank_sum += mid_rank;
    }
    i = j;
  }
  const double p = static_cast<double>(pos);
  const double u = member_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

// Largest TPR over thresholds "score >= thr" whose FPR is at most max_fpr.
// The threshold above every score (TPR = FPR = 0) is always admissible.
inline double TprAtFprThreshold(std::span<const double> scores, std::span<const char> is_member,
                                double max_fpr) {
  Require(scores.size() == is_member.size(), "TprAtFpr: size mismatch");
  std::size_t pos = 0, neg = 0;
  detail::CountClasses(is_member, pos, neg);
  Require(pos > 0 && neg > 0, "TprAtFpr: both members and non-members are required");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double best = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (is_member[order[j]]) ++tp; else ++fp;
      ++j;
    }
    const double fpr = static_cast<double>(fp) / static_cast<double>(neg);
    if (fpr <= max_fpr) best = std::max(best, static_cast<double>(tp) / static_cast<double>(pos));
    i = j;
  }
  return best;
}

inline AttackResult EvaluateAttack(std::span<const double> scores, std::span<const char> is_member) {
  AttackResult out;
  out.scores.assign(scores.begin(), scores.end());
  out.is_member.assign(is_member.begin(), is_member.end());
  detail::CountClasses(is_member, out.n_members, out.n_nonmembers);
  if (out.n_members == 0 || out.n_nonmembers == 0) {
    throw ContractError("EvaluateAttack: scores must cover both members and non-members");
  }
  out.auc = RocAuc(scores, is_member);
  for (double fpr : kReportedFprs) {
    out.tpr_at_fpr.push_back({fpr, TprAtFprThreshold(scores, is_member, fpr)});
  }
  return out;
}

}  // namespace cofedmid
