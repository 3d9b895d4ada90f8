#pragma once

// Trajectory-based membership inference over a SnapshotStore.
//
// The "target model" of a recorded round t is the model the attacker observes
// as the product of that round: client k's uploaded local (local selector),
// the server aggregate (global selector), or the |D_k|-weighted aggregate of
// the coalition's uploads (coalition selector). Its update direction is the
// target model minus the global model the round started from.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cofedmid/data.hpp"
#include "cofedmid/errors.hpp"
#include "cofedmid/fed.hpp"
#include "cofedmid/metrics.hpp"
#include "cofedmid/model.hpp"

namespace cofedmid {

enum class Measurement { kLoss, kConfidence, kGradCosine, kEntropy };

inline std::string_view MeasurementName(Measurement m) {
  switch (m) {
    case Measurement::kLoss: return "loss";
    case Measurement::kConfidence: return "confidence";
    case Measurement::kGradCosine: return "grad-cosine";
    case Measurement::kEntropy: return "entropy";
  }
  return "unknown";
}

struct TargetSelector {
  enum class Kind { kGlobal, kLocal, kCoalitionAggregate };
  Kind kind = Kind::kGlobal;
  std::size_t client = 0;
  std::vector<std::size_t> coalition;

  static TargetSelector Global() { return {}; }
  static TargetSelector Local(std::size_t k) { return {Kind::kLocal, k, {}}; }
  static TargetSelector CoalitionAggregate(std::vector<std::size_t> members) {
    std::sort(members.begin(), members.end());
    return {Kind::kCoalitionAggregate, 0, std::move(members)};
  }

  // Clients whose uploads are part of the target, excluded from OUT statistics.
  std::vector<std::size_t> TargetClients() const {
    switch (kind) {
      case Kind::kLocal: return {client};
      case Kind::kCoalitionAggregate: return coalition;
      case Kind::kGlobal: return {};
    }
    return {};
  }

  std::string Describe() const {
    switch (kind) {
      case Kind::kGlobal: return "global";
      case Kind::kLocal: return "local:" + std::to_string(client);
      case Kind::kCoalitionAggregate: {
        std::string s = "coalition:";
        for (std::size_t i = 0; i < coalition.size(); ++i) {
          if (i) s += ';';
          s += std::to_string(coalition[i]);
        }
        return s;
      }
    }
    return "unknown";
  }
};

struct TrajectoryRecord {
  std::size_t sample_id = 0;
  Measurement kind = Measurement::kLoss;
  std::vector<double> values;  // one per recorded round
};

// Per-round OUT statistics (population std, floored).
struct OutDistribution {
  std::vector<double> mean;
  std::vector<double> stddev;
};

inline constexpr double kOutStdFloor = 1e-6;

// Query samples with ground-truth membership.
struct AttackPool {
  std::vector<std::size_t> ids;
  std::vector<Sample> samples;
  std::vector<char> is_member;

  std::size_t size() const { return samples.size(); }
};

inline AttackPool MakeAttackPool(const LabeledDataset& data, const EvalPools& pools) {
  AttackPool out;
  auto add = [&](const std::vector<std::size_t>& ids, char member) {
    for (std::size_t id : ids) {
      out.ids.push_back(id);
      out.samples.push_back(data.samples.at(id));
      out.is_member.push_back(member);
    }
  };
  add(pools.members, 1);
  add(pools.non_members_ifl, 0);
  add(pools.non_members_ofl, 0);
  return out;
}

inline double CosineSimilarity(std::span<const double> a, std::span<const double> b) {
  Require(a.size() == b.size(), "CosineSimilarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

inline ParamVector Difference(const ParamVector& a, const ParamVector& b) {
  Require(a.size() == b.size(), "Difference: length mismatch");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

// Measurement of one sample under `model`. For grad-cosine this is the cosine
// between the sample's descent direction -grad(loss) at `round_start` and the
// update `model - round_start`.
inline double Measure(const ModelSpec& spec, const ParamVector& model,
                      const ParamVector& round_start, const Sample& sample, Measurement kind,
                      const ParamVector* descent_cache = nullptr) {
  switch (kind) {
    case Measurement::kLoss:
      return SampleLoss(spec, model, sample);
    case Measurement::kConfidence:
      return Forward(spec, model, sample.x).probs.at(static_cast<std::size_t>(sample.label));
    case Measurement::kEntropy: {
      double h = 0.0;
      for (double p : Forward(spec, model, sample.x).probs) {
        if (p > 0.0) h -= p * std::log(p);
      }
      return h;
    }
    case Measurement::kGradCosine: {
      ParamVector descent;
      if (descent_cache == nullptr) {
        descent = PerSampleGrad(spec, round_start, sample);
        for (double& v : descent) v = -v;
        descent_cache = &descent;
      }
      return CosineSimilarity(descent_cache->span(), Difference(model, round_start).span());
    }
  }
  return 0.0;
}

namespace detail {

inline ParamVector DescentDirection(const ModelSpec& spec, const ParamVector& at,
                                    const Sample& sample) {
  ParamVector g = PerSampleGrad(spec, at, sample);
  for (double& v : g) v = -v;
  return g;
}

}  // namespace detail

inline ParamVector CoalitionAggregate(const SnapshotStore& store, std::size_t snapshot_index,
                                      std::span<const std::size_t> coalition) {
  Require(!coalition.empty(), "CoalitionAggregate: empty coalition");
  const Snapshot& snap = store.at(snapshot_index);
  std::vector<ParamVector> params;
  std::vector<double> weights;
  for (std::size_t k : coalition) {
    Require(k < snap.locals.size(), "CoalitionAggregate: no snapshot for client " +
                                        std::to_string(k) + " at round " +
                                        std::to_string(snap.round));
    params.push_back(snap.locals[k]);
    weights.push_back(static_cast<double>(store.client_sizes().at(k)));
  }
  return AggregateWeighted(params, weights);
}

inline ParamVector TargetModel(const SnapshotStore& store, std::size_t snapshot_index,
                               const TargetSelector& selector) {
  const Snapshot& snap = store.at(snapshot_index);
  switch (selector.kind) {
    case TargetSelector::Kind::kGlobal:
      return snap.next_global;
    case TargetSelector::Kind::kLocal:
      if (selector.client >= snap.locals.size()) {
        throw ContractError("no local snapshot of client " + std::to_string(selector.client) +
                            " at round " + std::to_string(snap.round));
      }
      return snap.locals[selector.client];
    case TargetSelector::Kind::kCoalitionAggregate:
      return CoalitionAggregate(store, snapshot_index, selector.coalition);
  }
  return {};
}

inline std::vector<TrajectoryRecord> ExtractTrajectories(const ModelSpec& spec,
                                                         const SnapshotStore& store,
                                                         const TargetSelector& selector,
                                                         std::span<const Sample> samples,
                                                         std::span<const std::size_t> sample_ids,
                                                         Measurement kind) {
  Require(!store.empty(), "ExtractTrajectories: empty snapshot store");
  Require(sample_ids.empty() || sample_ids.size() == samples.size(),
          "ExtractTrajectories: id count mismatch");
  std::vector<TrajectoryRecord> records(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    records[i].sample_id = sample_ids.empty() ? i : sample_ids[i];
    records[i].kind = kind;
    records[i].values.reserve(store.size());
  }
  for (std::size_t r = 0; r < store.size(); ++r) {
    const ParamVector model = TargetModel(store, r, selector);
    const ParamVector& start = store.at(r).global;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      records[i].values.push_back(Measure(spec, model, start, samples[i], kind));
    }
  }
  return records;
}

inline std::vector<double> AttackLossSeries(std::span<const TrajectoryRecord> records) {
  std::vector<double> scores;
  for (const auto& rec : records) {
    Require(!rec.values.empty(), "Loss-Series: empty trajectory");
    const double mean = std::accumulate(rec.values.begin(), rec.values.end(), 0.0) /
                        static_cast<double>(rec.values.size());
    scores.push_back(-mean);
  }
  return scores;
}

// Negative mean first difference: slower cosine decay scores higher.
inline std::vector<double> AttackAvgCosine(std::span<const TrajectoryRecord> records) {
  std::vector<double> scores;
  for (const auto& rec : records) {
    Require(rec.values.size() >= 2, "Avg-Cosine: need at least two rounds");
    const double mean_diff = (rec.values.back() - rec.values.front()) /
                             static_cast<double>(rec.values.size() - 1);
    scores.push_back(-mean_diff);
  }
  return scores;
}

// OLS slope of values against positions 0, 1, ..., n-1.
inline double TrajectorySlope(std::span<const double> values) {
  Require(values.size() >= 2, "TrajectorySlope: need at least two points");
  const double n = static_cast<double>(values.size());
  const double mean_x = (n - 1.0) / 2.0;
  const double mean_y = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double dx = static_cast<double>(i) - mean_x;
    sxy += dx * (values[i] - mean_y);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

// FTA-L (loss): -slope. FTA-C (confidence): +slope.
inline std::vector<double> AttackFta(std::span<const TrajectoryRecord> records, Measurement kind) {
  Require(kind == Measurement::kLoss || kind == Measurement::kConfidence,
          "FTA: measurement must be loss or confidence");
  std::vector<double> scores;
  for (const auto& rec : records) {
    const double slope = TrajectorySlope(rec.values);
    scores.push_back(kind == Measurement::kLoss ? -slope : slope);
  }
  return scores;
}

// Mean and population standard deviation (floored at kOutStdFloor).
inline std::pair<double, double> OutStatistics(std::span<const double> values) {
  Require(!values.empty(), "OutStatistics: no values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::max(std::sqrt(var / n), kOutStdFloor)};
}

inline std::vector<std::size_t> NonTargetClients(const SnapshotStore& store,
                                                 std::span<const std::size_t> targets) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < store.num_clients(); ++k) {
    if (std::find(targets.begin(), targets.end(), k) == targets.end()) out.push_back(k);
  }
  return out;
}

inline OutDistribution BuildOutDistribution(const ModelSpec& spec, const SnapshotStore& store,
                                            const Sample& sample,
                                            std::span<const std::size_t> target_clients,
                                            Measurement kind) {
  const std::vector<std::size_t> others = NonTargetClients(store, target_clients);
  Require(others.size() >= 2, "OUT distribution needs at least two non-target clients");
  OutDistribution out;
  std::vector<double> values(others.size());
  for (std::size_t r = 0; r < store.size(); ++r) {
    const Snapshot& snap = store.at(r);
    std::optional<ParamVector> descent;
    if (kind == Measurement::kGradCosine) descent = detail::DescentDirection(spec, snap.global, sample);
    for (std::size_t i = 0; i < others.size(); ++i) {
      Require(others[i] < snap.locals.size(), "OUT distribution: missing local snapshot");
      values[i] = Measure(spec, snap.locals[others[i]], snap.global, sample, kind,
                          descent ? &*descent : nullptr);
    }
    const auto [mean, sd] = OutStatistics(values);
    out.mean.push_back(mean);
    out.stddev.push_back(sd);
  }
  return out;
}

// One-tailed z-score sum: loss counts below the OUT mean, grad-cosine above it.
inline double FedMiaScore(std::span<const double> target_values, const OutDistribution& out,
                          Measurement kind) {
  Require(target_values.size() == out.mean.size() && out.mean.size() == out.stddev.size(),
          "FedMIA: trajectory and OUT distribution lengths differ");
  const double sign = kind == Measurement::kLoss ? -1.0 : 1.0;
  double score = 0.0;
  for (std::size_t t = 0; t < target_values.size(); ++t) {
    score += sign * (target_values[t] - out.mean[t]) / out.stddev[t];
  }
  return score;
}

inline std::vector<double> AttackFedMia(const ModelSpec& spec, const SnapshotStore& store,
                                        std::span<const Sample> samples,
                                        const TargetSelector& selector, Measurement kind) {
  Require(kind == Measurement::kLoss || kind == Measurement::kGradCosine,
          "FedMIA: measurement must be loss (I) or grad-cosine (II)");
  const auto records = ExtractTrajectories(spec, store, selector, samples, {}, kind);
  const std::vector<std::size_t> targets = selector.TargetClients();
  std::vector<double> scores;
  scores.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const OutDistribution out = BuildOutDistribution(spec, store, samples[i], targets, kind);
    scores.push_back(FedMiaScore(records[i].values, out, kind));
  }
  return scores;
}

enum class AttackKind { kLossSeries, kAvgCosine, kFedMiaI, kFedMiaII, kFtaC, kFtaL };

inline constexpr AttackKind kAllAttacks[] = {AttackKind::kLossSeries, AttackKind::kAvgCosine,
                                             AttackKind::kFedMiaI,    AttackKind::kFedMiaII,
                                             AttackKind::kFtaC,       AttackKind::kFtaL};

inline std::string_view AttackName(AttackKind kind) {
  switch (kind) {
    case AttackKind::kLossSeries: return "loss_series";
    case AttackKind::kAvgCosine: return "avg_cosine";
    case AttackKind::kFedMiaI: return "fedmia_1";
    case AttackKind::kFedMiaII: return "fedmia_2";
    case AttackKind::kFtaC: return "fta_c";
    case AttackKind::kFtaL: return "fta_l";
  }
  return "unknown";
}

inline AttackKind ParseAttackName(std::string_view name) {
  for (AttackKind k : kAllAttacks) {
    if (AttackName(k) == name) return k;
  }
  throw ContractError("unknown attack: " + std::string(name));
}

inline std::vector<double> AttackScores(const ModelSpec& spec, const SnapshotStore& store,
                                        const TargetSelector& selector,
                                        std::span<const Sample> samples, AttackKind attack) {
  switch (attack) {
    case AttackKind::kLossSeries:
      return AttackLossSeries(
          ExtractTrajectories(spec, store, selector, samples, {}, Measurement::kLoss));
    case AttackKind::kAvgCosine:
      return AttackAvgCosine(
          ExtractTrajectories(spec, store, selector, samples, {}, Measurement::kGradCosine));
    case AttackKind::kFedMiaI:
      return AttackFedMia(spec, store, samples, selector, Measurement::kLoss);
    case AttackKind::kFedMiaII:
      return AttackFedMia(spec, store, samples, selector, Measurement::kGradCosine);
    case AttackKind::kFtaC:
      return AttackFta(
          ExtractTrajectories(spec, store, selector, samples, {}, Measurement::kConfidence),
          Measurement::kConfidence);
    case AttackKind::kFtaL:
      return AttackFta(ExtractTrajectories(spec, store, selector, samples, {}, Measurement::kLoss),
                       Measurement::kLoss);
  }
  return {};
}

inline AttackResult RunAttack(const ModelSpec& spec, const SnapshotStore& store,
                              const TargetSelector& selector, const AttackPool& pool,
                              AttackKind attack) {
  AttackResult result =
      EvaluateAttack(AttackScores(spec, store, selector, pool.samples, attack), pool.is_member);
  result.attack = std::string(AttackName(attack));
  result.target = selector.Describe();
  return result;
}

// Adaptive attack: the target is the |D_k|-weighted aggregate of the
// coalition's uploads, in which the neutral perturbations cancel.
inline AttackResult AttackAdaptiveCoalition(const ModelSpec& spec, const SnapshotStore& store,
                                            std::vector<std::size_t> coalition,
                                            const AttackPool& pool, AttackKind attack) {
  return RunAttack(spec, store, TargetSelector::CoalitionAggregate(std::move(coalition)), pool,
                   attack);
}

}  // namespace cofedmid
