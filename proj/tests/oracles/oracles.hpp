#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. They favor obviousness over speed and share no code with the
// library beyond plain data types.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <set>
#include <utility>
#include <vector>

namespace oracle {

// All m-element subsets of {0..n-1}, each sorted ascending.
inline std::vector<std::vector<int>> Combinations(int n, int m) {
  std::vector<std::vector<int>> out;
  std::vector<int> current;
  std::function<void(int)> rec = [&](int start) {
    if (static_cast<int>(current.size()) == m) {
      out.push_back(current);
      return;
    }
    for (int c = start; c < n; ++c) {
      current.push_back(c);
      rec(c + 1);
      current.pop_back();
    }
  };
  rec(0);
  return out;
}

inline int Overlap(const std::vector<int>& a, const std::vector<int>& b) {
  int count = 0;
  for (int x : a) count += std::count(b.begin(), b.end(), x) > 0 ? 1 : 0;
  return count;
}

// Exhaustive minimum, over every d-tuple of m-subsets of N classes whose union
// is all N classes, of the largest pairwise overlap. Returns -1 when no tuple
// covers the classes.
inline int BruteForceMinMaxOverlap(int n, int d, int m) {
  const auto subsets = Combinations(n, m);
  int best = std::numeric_limits<int>::max();
  std::vector<int> pick;  // non-decreasing indices: order of clients is irrelevant
  std::function<void(std::size_t)> rec = [&](std::size_t start) {
    if (static_cast<int>(pick.size()) == d) {
      std::set<int> covered;
      int worst = 0;
      for (std::size_t i = 0; i < pick.size(); ++i) {
        covered.insert(subsets[pick[i]].begin(), subsets[pick[i]].end());
        for (std::size_t j = i + 1; j < pick.size(); ++j) {
          worst = std::max(worst, Overlap(subsets[pick[i]], subsets[pick[j]]));
        }
      }
      if (static_cast<int>(covered.size()) == n) best = std::min(best, worst);
      return;
    }
    for (std::size_t s = start; s < subsets.size(); ++s) {
      pick.push_back(static_cast<int>(s));
      rec(s);
      pick.pop_back();
    }
  };
  rec(0);
  return best == std::numeric_limits<int>::max() ? -1 : best;
}

// AUC by counting every (member, non-member) pair: 1 if the member scores
// higher, 1/2 on a tie.
inline double PairCountingAuc(const std::vector<double>& scores, const std::vector<char>& member) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!member[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (member[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Empirical ROC points for "predict member iff score >= thr" at every
// distinct score plus +infinity, sorted by FPR then TPR.
inline std::vector<std::pair<double, double>> RocPoints(const std::vector<double>& scores,
                                                        const std::vector<char>& member) {
  std::vector<double> thresholds(scores.begin(), scores.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double pos = 0.0, neg = 0.0;
  for (char m : member) (m ? pos : neg) += 1.0;
  std::vector<std::pair<double, double>> points;
  for (double thr : thresholds) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= thr) (member[i] ? tp : fp) += 1.0;
    }
    points.emplace_back(fp / neg, tp / pos);
  }
  std::sort(points.begin(), points.end());
  return points;
}

// Trapezoidal area under the empirical ROC curve.
inline double TrapezoidAuc(const std::vector<double>& scores, const std::vector<char>& member) {
  const auto pts = RocPoints(scores, member);
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) / 2.0;
  }
  return area;
}

// Sweeps every threshold and keeps the best TPR whose FPR is within budget.
inline double SweepTprAtFpr(const std::vector<double>& scores, const std::vector<char>& member,
                            double max_fpr) {
  double best = 0.0;
  for (const auto& [fpr, tpr] : RocPoints(scores, member)) {
    if (fpr <= max_fpr) best = std::max(best, tpr);
  }
  return best;
}

}  // namespace oracle
