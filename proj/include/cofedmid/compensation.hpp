#pragma once

// Utility-aware compensation: coalition clients recycle a bounded number of
// excluded samples from a loss interval chosen by an EXP3 bandit, and train
// on them under a confidence-regularized loss.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "cofedmid/data.hpp"
#include "cofedmid/errors.hpp"
#include "cofedmid/model.hpp"
#include "cofedmid/partition.hpp"
#include "cofedmid/rng.hpp"

namespace cofedmid {

struct RecycleConfig {
  int t0 = 10;                     // first round that recycles
  std::size_t intervals = 10;      // M
  double max_recycle_ratio = 0.05; // r_l
  double entropy_weight = 0.005;   // mu
  double exploration = 0.1;        // eta
  double val_fraction = 0.1;

  void Validate() const {
    Require(t0 >= 1, "RecycleConfig: t0 must be >= 1");
    Require(intervals >= 1, "RecycleConfig: M must be >= 1");
    Require(max_recycle_ratio >= 0.0 && max_recycle_ratio <= 1.0,
            "RecycleConfig: r_l must be in [0,1]");
    Require(entropy_weight >= 0.0, "RecycleConfig: mu must be >= 0");
    Require(exploration > 0.0 && exploration <= 1.0, "RecycleConfig: eta must be in (0,1]");
    Require(val_fraction >= 0.0 && val_fraction < 1.0,
            "RecycleConfig: val_fraction must be in [0,1)");
  }

  bool operator==(const RecycleConfig&) const = default;
};

struct SampleIntervals {
  std::vector<double> normalized_loss;              // per sample
  std::vector<std::size_t> interval_of;             // per sample, 0-based
  std::vector<std::vector<std::size_t>> members;    // per interval, ascending loss rank

  std::size_t num_intervals() const { return members.size(); }
};

// Min-max normalizes the losses, ranks samples ascending (ties by index) and
// cuts the ranking at q_j = floor(j * n / M). If all losses are equal every
// normalized loss is 0 and the split follows index order.
inline SampleIntervals InitIntervals(std::span<const double> losses, std::size_t num_intervals) {
  Require(num_intervals >= 1, "InitIntervals: M must be >= 1");
  const std::size_t n = losses.size();
  if (num_intervals > n) {
    throw ContractError("InitIntervals: M = " + std::to_string(num_intervals) +
                        " exceeds sample count " + std::to_string(n));
  }
  SampleIntervals out;
  const auto [lo_it, hi_it] = std::minmax_element(losses.begin(), losses.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  out.normalized_loss.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.normalized_loss[i] = range > 0.0 ? (losses[i] - lo) / range : 0.0;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return out.normalized_loss[a] < out.normalized_loss[b];
  });
  out.members.resize(num_intervals);
  out.interval_of.resize(n);
  for (std::size_t j = 0; j < num_intervals; ++j) {
    const std::size_t begin = j * n / num_intervals;
    const std::size_t end = (j + 1) * n / num_intervals;
    for (std::size_t r = begin; r < end; ++r) {
      out.members[j].push_back(order[r]);
      out.interval_of[order[r]] = j;
    }
  }
  return out;
}

// Mean validation loss reduction; positive means the update helped.
inline double ComputeReward(double val_loss_before, double val_loss_after) {
  return val_loss_before - val_loss_after;
}

// Linear-interpolated percentile, q in [0, 1].
inline double Percentile(std::vector<double> values, double q) {
  Require(!values.empty(), "Percentile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lower = static_cast<std::size_t>(std::floor(pos));
  const std::size_t upper = std::min(lower + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lower);
  return values[lower] + frac * (values[upper] - values[lower]);
}

inline double NormalizeReward(double reward, std::span<const double> history) {
  Require(!history.empty(), "NormalizeReward: empty reward history");
  const std::vector<double> hist(history.begin(), history.end());
  const double r20 = Percentile(hist, 0.2);
  const double r80 = Percentile(hist, 0.8);
  if (r80 == r20) return 0.0;
  return std::clamp(2.0 * (reward - r20) / (r80 - r20) - 1.0, -1.0, 1.0);
}

// EXP3 over M sample intervals.
//   p_j = (1 - eta) w_j / sum(w) + eta / M
//   w_j <- w_j * exp(eta * g / M),  g = ((r + 1) / 2) / p_j
// Rewards in [-1, 1] are mapped to [0, 1]; weights are clamped to
// [kMinWeight, kMaxWeight].
class Exp3Bandit {
 public:
  static constexpr double kMinWeight = 1e-6;
  static constexpr double kMaxWeight = 1e6;
  // Normalized rewards are 0 until this many raw rewards have been observed.
  static constexpr std::size_t kBootstrapRewards = 5;

  Exp3Bandit() : Exp3Bandit(1, 0.1) {}
  Exp3Bandit(std::size_t arms, double eta) : weights_(arms, 1.0), eta_(eta) {
    Require(arms >= 1, "Exp3Bandit: need at least one arm");
    Require(eta > 0.0 && eta <= 1.0, "Exp3Bandit: eta must be in (0,1]");
  }

  std::size_t num_arms() const { return weights_.size(); }
  double eta() const { return eta_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& reward_history() const { return reward_history_; }
  const std::vector<std::size_t>& selections() const { return selections_; }

  std::vector<double> Probabilities() const {
    const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
    const double m = static_cast<double>(weights_.size());
    std::vector<double> p(weights_.size());
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] = (1.0 - eta_) * weights_[j] / total + eta_ / m;
    }
    return p;
  }

  std::size_t Select(Rng& rng) {
    const std::vector<double> p = Probabilities();
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double cumulative = 0.0;
    std::size_t arm = p.size() - 1;
    for (std::size_t j = 0; j < p.size(); ++j) {
      cumulative += p[j];
      if (u < cumulative) {
        arm = j;
        break;
      }
    }
    selections_.push_back(arm);
    return arm;
  }

  void Update(std::size_t arm, double normalized_reward) {
    Require(arm < weights_.size(), "Exp3Bandit: arm out of range");
    Require(normalized_reward >= -1.0 && normalized_reward <= 1.0,
            "Exp3Bandit: reward must be in [-1,1]");
    const double p = Probabilities()[arm];
    const double gain = ((normalized_reward + 1.0) / 2.0) / p;
    const double m = static_cast<double>(weights_.size());
    weights_[arm] = std::clamp(weights_[arm] * std::exp(eta_ * gain / m), kMinWeight, kMaxWeight);
  }

  // Normalizes a raw reward against the prior history (0 during bootstrap)
  // and then appends it to the history.
  double NormalizeAndRecord(double raw_reward) {
    const double normalized = reward_history_.size() < kBootstrapRewards
                                  ? 0.0
                                  : NormalizeReward(raw_reward, reward_history_);
    reward_history_.push_back(raw_reward);
    return normalized;
  }

 private:
  std::vector<double> weights_;
  double eta_;
  std::vector<double> reward_history_;
  std::vector<std::size_t> selections_;
};

// (interval `arm` minus the assigned samples), uniformly subsampled to at
// most floor(r_l * pool_size). Returned indices are sorted.
inline std::vector<std::size_t> SelectRecycled(const SampleIntervals& intervals,
                                               std::size_t arm,
                                               std::span<const std::size_t> assigned,
                                               std::size_t pool_size,
                                               double max_recycle_ratio, Rng& rng) {
  Require(arm < intervals.num_intervals(), "SelectRecycled: arm out of range");
  std::vector<std::size_t> candidates;
  for (std::size_t i : intervals.members[arm]) {
    if (std::find(assigned.begin(), assigned.end(), i) == assigned.end()) {
      candidates.push_back(i);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  const auto cap = static_cast<std::size_t>(
      std::floor(max_recycle_ratio * static_cast<double>(pool_size) + 1e-9));
  if (candidates.size() > cap) {
    std::shuffle(candidates.begin(), candidates.end(), rng);
    candidates.resize(cap);
    std::sort(candidates.begin(), candidates.end());
  }
  return candidates;
}

// Keeps the predicted confidence of the true class and spreads the rest
// evenly over the other N - 1 classes.
inline std::vector<double> SoftLabel(std::span<const double> probs, int true_class) {
  const std::size_t n = probs.size();
  Require(n >= 2, "SoftLabel: need at least two classes");
  Require(true_class >= 0 && static_cast<std::size_t>(true_class) < n,
          "SoftLabel: class out of range");
  const double pc = probs[static_cast<std::size_t>(true_class)];
  std::vector<double> label(n, (1.0 - pc) / static_cast<double>(n - 1));
  label[static_cast<std::size_t>(true_class)] = pc;
  return label;
}

inline constexpr double kSoftLabelFloor = 1e-6;

// Soft label floored at kSoftLabelFloor and renormalized, used as the KL
// target.
inline std::vector<double> SoftTarget(std::span<const double> probs, int true_class) {
  std::vector<double> target = SoftLabel(probs, true_class);
  double total = 0.0;
  for (double& v : target) {
    v = std::max(v, kSoftLabelFloor);
    total += v;
  }
  for (double& v : target) v /= total;
  return target;
}

// KL(p || target) - mu * H(p) for p = softmax(z), with the target held
// constant. Adds d/dz into dlogits and returns the value.
//   d/dz_j = p_j (a_j - sum_i p_i a_i),  a_i = (1 + mu) ln p_i - ln target_i
inline double ConfidenceRegularizerTerm(std::span<const double> probs,
                                        std::span<const double> target, double mu,
                                        std::span<double> dlogits) {
  const std::size_t n = probs.size();
  std::vector<double> a(n, 0.0);
  double value = 0.0;  // also the p-weighted mean of a
  for (std::size_t i = 0; i < n; ++i) {
    if (probs[i] <= 0.0) continue;
    a[i] = (1.0 + mu) * std::log(probs[i]) - std::log(target[i]);
    value += probs[i] * a[i];
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (probs[j] <= 0.0) continue;
    dlogits[j] += probs[j] * (a[j] - value);
  }
  return value;
}

// Regularizer loss and parameter gradient against an explicit target.
inline LossGrad ConfidenceRegularizedLossWithTarget(const ModelSpec& spec,
                                                    const ParamVector& params,
                                                    std::span<const double> x,
                                                    std::span<const double> target,
                                                    double mu) {
  Require(target.size() == spec.num_classes, "confidence regularizer: target size mismatch");
  ForwardCache cache;
  ForwardInto(spec, params.span(), x, cache);
  std::vector<double> dlogits(spec.num_classes, 0.0);
  LossGrad out{ConfidenceRegularizerTerm(cache.probs, target, mu, dlogits),
               ParamVector(params.size())};
  BackwardInto(spec, params.span(), x, cache, dlogits, 1.0, out.grad.span());
  return out;
}

// The soft target is built from the model's own prediction on (x, y) and
// then treated as a constant.
inline LossGrad ConfidenceRegularizedLoss(const ModelSpec& spec, const ParamVector& params,
                                          std::span<const double> x, int y, double mu) {
  Require(mu >= 0.0, "confidence regularizer: mu must be >= 0");
  const std::vector<double> target = SoftTarget(Forward(spec, params, x).probs, y);
  return ConfidenceRegularizedLossWithTarget(spec, params, x, target, mu);
}

struct CompensationTelemetry {
  int round = 0;
  std::size_t client = 0;
  int arm = -1;  // -1 before recycling starts
  double raw_reward = 0.0;
  double norm_reward = 0.0;
  std::size_t n_assigned = 0;
  std::size_t n_recycled = 0;
};

struct CompensationResult {
  ParamVector params;
  CompensationTelemetry telemetry;
};

// One coalition client's local update for round t.
//   t <  t0: plain cross-entropy on the assigned samples.
//   t >= t0: intervals from the received global model's per-sample losses,
//            an EXP3-chosen interval supplies recycled samples, training uses
//            cross-entropy on all samples plus the confidence regularizer on
//            recycled ones, and the validation loss reduction updates the
//            bandit.
// With nothing to train on, the global parameters are returned unchanged and
// the bandit is not updated.
inline CompensationResult CompensatedLocalUpdate(const ModelSpec& spec,
                                                 const ClientDataset& client, int round,
                                                 const ParamVector& global_params,
                                                 std::span<const int> assigned_classes,
                                                 const RecycleConfig& config,
                                                 const SgdOptions& sgd, Exp3Bandit& bandit,
                                                 std::uint64_t recycle_seed) {
  Require(round >= 1, "CompensatedLocalUpdate: round must be >= 1");
  CompensationResult result{global_params, {}};
  CompensationTelemetry& tel = result.telemetry;
  tel.round = round;
  tel.client = client.client_id;

  const std::vector<std::size_t> assigned = SelectAssignedIndices(client.train, assigned_classes);
  tel.n_assigned = assigned.size();

  if (round < config.t0) {
    if (assigned.empty()) return result;
    std::vector<Sample> batch;
    batch.reserve(assigned.size());
    for (std::size_t i : assigned) batch.push_back(client.train[i]);
    result.params = SgdEpochs(spec, global_params, batch, sgd);
    return result;
  }

  std::vector<double> losses(client.train.size());
  for (std::size_t i = 0; i < client.train.size(); ++i) {
    losses[i] = SampleLoss(spec, global_params, client.train[i]);
  }
  const SampleIntervals intervals = InitIntervals(losses, config.intervals);
  Rng rng(recycle_seed);
  const std::size_t arm = bandit.Select(rng);
  tel.arm = static_cast<int>(arm);
  const std::vector<std::size_t> recycled = SelectRecycled(
      intervals, arm, assigned, client.train.size(), config.max_recycle_ratio, rng);
  tel.n_recycled = recycled.size();
  if (assigned.empty() && recycled.empty()) return result;

  std::vector<std::size_t> chosen(assigned);
  chosen.insert(chosen.end(), recycled.begin(), recycled.end());
  std::sort(chosen.begin(), chosen.end());
  std::vector<Sample> batch;
  std::vector<char> regularized;
  batch.reserve(chosen.size());
  for (std::size_t i : chosen) {
    batch.push_back(client.train[i]);
    regularized.push_back(std::binary_search(recycled.begin(), recycled.end(), i) ? 1 : 0);
  }
  const double mu = config.entropy_weight;
  auto regularizer = [&](std::size_t idx, std::span<const double> probs,
                         std::span<double> dlogits) -> double {
    if (!regularized[idx]) return 0.0;
    const std::vector<double> target = SoftTarget(probs, batch[idx].label);
    return ConfidenceRegularizerTerm(probs, target, mu, dlogits);
  };
  result.params = TrainEpochs(spec, global_params, batch, sgd, regularizer);

  const double before = MeanLoss(spec, global_params, client.validation);
  const double after = MeanLoss(spec, result.params, client.validation);
  tel.raw_reward = ComputeReward(before, after);
  tel.norm_reward = bandit.NormalizeAndRecord(tel.raw_reward);
  bandit.Update(arm, tel.norm_reward);
  return result;
}

}  // namespace cofedmid
