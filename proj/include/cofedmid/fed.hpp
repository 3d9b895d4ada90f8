#pragma once

// FedAvg simulation with full participation, per-client defense hooks and
// snapshot recording for trajectory attacks.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "cofedmid/compensation.hpp"
#include "cofedmid/data.hpp"
#include "cofedmid/errors.hpp"
#include "cofedmid/model.hpp"
#include "cofedmid/partition.hpp"
#include "cofedmid/perturbation.hpp"
#include "cofedmid/rng.hpp"

namespace cofedmid {

enum class DefenseKind { kNone, kCoFedMid, kGradSparse, kGradNoise };

struct DefenseConfig {
  DefenseKind kind = DefenseKind::kNone;
  double keep_rate = 0.1;     // grad_sparse
  double noise_sigma = 0.01;  // grad_noise

  // Class-guided partition.
  std::size_t m_max = 0;
  std::size_t m_min = 0;
  DecaySchedule decay = DecaySchedule::kLinear;
  // Utility-aware compensation.
  RecycleConfig recycle;
  // Aggregation-neutral perturbation.
  double perturb_sigma = 0.1;
  double perturb_ratio = 0.2;

  bool operator==(const DefenseConfig&) const = default;
};

struct FlConfig {
  std::size_t num_clients = 10;
  int rounds = 1;
  double lr = 0.1;
  int local_epochs = 1;
  std::size_t batch_size = 32;
  int snapshot_every = 10;
  DefenseConfig defense;
  std::vector<std::size_t> coalition;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  bool operator==(const FlConfig&) const = default;

  bool IsCoalitionMember(std::size_t k) const {
    return std::find(coalition.begin(), coalition.end(), k) != coalition.end();
  }

  void Validate(std::size_t num_classes) const {
    Require(num_clients >= 1, "FlConfig: need at least one client");
    Require(rounds >= 1, "FlConfig: rounds must be >= 1");
    Require(lr >= 0.0, "FlConfig: lr must be >= 0");
    Require(local_epochs >= 1, "FlConfig: local_epochs must be >= 1");
    Require(batch_size >= 1, "FlConfig: batch_size must be >= 1");
    Require(snapshot_every >= 1, "FlConfig: snapshot_every must be >= 1");
    std::set<std::size_t> seen;
    for (std::size_t k : coalition) {
      Require(k < num_clients, "FlConfig: coalition member " + std::to_string(k) +
                                   " is not a client id");
      Require(seen.insert(k).second, "FlConfig: duplicate coalition member");
    }
    const DefenseConfig& d = defense;
    if (d.kind == DefenseKind::kCoFedMid) {
      Require(!coalition.empty(), "FlConfig: cofedmid needs a non-empty coalition");
      Require(d.m_min >= 1 && d.m_min <= d.m_max && d.m_max <= num_classes,
              "FlConfig: need 1 <= m_min <= m_max <= N");
      d.recycle.Validate();
      Require(d.recycle.t0 <= rounds, "FlConfig: t0 must not exceed T");
      Require(d.perturb_sigma >= 0.0, "FlConfig: perturbation sigma must be >= 0");
      Require(d.perturb_ratio > 0.0 && d.perturb_ratio <= 1.0,
              "FlConfig: perturbation ratio must be in (0,1]");
    }
    if (d.kind == DefenseKind::kGradSparse) {
      Require(d.keep_rate > 0.0 && d.keep_rate <= 1.0, "FlConfig: keep_rate must be in (0,1]");
    }
    if (d.kind == DefenseKind::kGradNoise) {
      Require(d.noise_sigma >= 0.0, "FlConfig: noise sigma must be >= 0");
    }
  }
};

// Element-wise sum_k (w_k / W) * params_k with W = sum_k w_k.
inline ParamVector AggregateWeighted(std::span<const ParamVector> params,
                                     std::span<const double> weights) {
  Require(!params.empty(), "AggregateWeighted: nothing to aggregate");
  Require(params.size() == weights.size(), "AggregateWeighted: weight count mismatch");
  double total = 0.0;
  for (double w : weights) {
    Require(w >= 0.0 && std::isfinite(w), "AggregateWeighted: weights must be non-negative");
    total += w;
  }
  Require(total > 0.0, "AggregateWeighted: weights sum to zero");
  const std::size_t p = params.front().size();
  ParamVector out(p);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Require(params[k].size() == p, "AggregateWeighted: parameter length mismatch");
    const double w = weights[k] / total;
    for (std::size_t i = 0; i < p; ++i) out[i] += w * params[k][i];
  }
  return out;
}

// Keeps the ceil(keep_rate * P) largest-magnitude entries (ties: lower index).
inline ParamVector GradSparsify(const ParamVector& delta, double keep_rate) {
  Require(keep_rate > 0.0 && keep_rate <= 1.0, "GradSparsify: keep_rate must be in (0,1]");
  const std::size_t keep = std::min(
      delta.size(),
      static_cast<std::size_t>(std::ceil(keep_rate * static_cast<double>(delta.size()) - 1e-9)));
  std::vector<std::size_t> order(delta.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(delta[a]) > std::abs(delta[b]);
  });
  ParamVector out(delta.size());
  for (std::size_t r = 0; r < keep; ++r) out[order[r]] = delta[order[r]];
  return out;
}

inline ParamVector GradGaussianNoise(const ParamVector& delta, double sigma, std::uint64_t seed) {
  Require(sigma >= 0.0, "GradGaussianNoise: sigma must be >= 0");
  ParamVector out = delta;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  for (double& v : out) v += normal(rng);
  return out;
}

struct Snapshot {
  int round = 0;
  ParamVector global;               // model the clients started the round from
  ParamVector next_global;          // aggregate produced by the round
  std::vector<ParamVector> locals;  // per client, as sent to the server

  bool operator==(const Snapshot&) const = default;
};

class SnapshotStore {
 public:
  SnapshotStore() = default;
  explicit SnapshotStore(std::vector<std::size_t> client_sizes)
      : client_sizes_(std::move(client_sizes)) {}

  // Round 1 and every multiple of `every`.
  static bool IsDue(int round, int every) { return round == 1 || round % every == 0; }

  void Add(Snapshot snapshot) {
    Require(snapshots_.empty() || snapshot.round > snapshots_.back().round,
            "SnapshotStore: rounds must be added in increasing order");
    snapshots_.push_back(std::move(snapshot));
  }

  bool empty() const { return snapshots_.empty(); }
  std::size_t size() const { return snapshots_.size(); }
  const Snapshot& at(std::size_t i) const { return snapshots_.at(i); }
  const std::vector<Snapshot>& snapshots() const { return snapshots_; }
  const std::vector<std::size_t>& client_sizes() const { return client_sizes_; }
  std::size_t num_clients() const { return client_sizes_.size(); }

  std::vector<int> rounds() const {
    std::vector<int> out;
    for (const auto& s : snapshots_) out.push_back(s.round);
    return out;
  }

  bool operator==(const SnapshotStore&) const = default;

 private:
  std::vector<std::size_t> client_sizes_;
  std::vector<Snapshot> snapshots_;
};

struct RoundReport {
  int round = 0;
  double test_acc = 0.0;
  double mean_train_loss = 0.0;
  std::vector<std::size_t> client_sizes;

  bool operator==(const RoundReport&) const = default;
};

struct TrainingResult {
  SnapshotStore store;
  std::vector<RoundReport> reports;
  std::vector<CompensationTelemetry> telemetry;
  ClassAssignmentSchedule schedule;
  ParamVector final_global;
};

// Builds per-client datasets. Coalition clients under cofedmid hold out a
// validation slice for the compensation reward; everyone else trains on all
// local data.
inline std::vector<ClientDataset> MakeClientDatasets(const LabeledDataset& data,
                                                     const PartitionPlan& plan,
                                                     const FlConfig& config) {
  std::vector<ClientDataset> clients;
  for (std::size_t k = 0; k < plan.num_clients(); ++k) {
    const bool holds_validation =
        config.defense.kind == DefenseKind::kCoFedMid && config.IsCoalitionMember(k);
    clients.push_back(MakeClientDataset(data, k, plan.client_indices[k],
                                        holds_validation ? config.defense.recycle.val_fraction : 0.0,
                                        config.seed));
  }
  return clients;
}

class FederatedSimulation {
 public:
  FederatedSimulation(ModelSpec spec, FlConfig config, std::vector<ClientDataset> clients,
                      LabeledDataset test)
      : spec_(spec), config_(std::move(config)), clients_(std::move(clients)),
        test_(std::move(test)) {
    spec_.Validate();
    config_.Validate(spec_.num_classes);
    Require(clients_.size() == config_.num_clients,
            "FederatedSimulation: client count does not match config");
    std::vector<std::size_t> sizes;
    for (const auto& c : clients_) {
      Require(!c.train.empty(), "FederatedSimulation: client " + std::to_string(c.client_id) +
                                    " has no training data");
      sizes.push_back(c.size());
    }
    store_ = SnapshotStore(sizes);
    global_ = InitParams(spec_, DeriveSeed(config_.seed, "model-init"));
    bandits_.assign(clients_.size(),
                    Exp3Bandit(config_.defense.recycle.intervals, config_.defense.recycle.exploration));

    if (config_.defense.kind == DefenseKind::kCoFedMid) {
      CoalitionSpec cs;
      cs.coalition_size = config_.coalition.size();
      cs.num_classes = spec_.num_classes;
      cs.m_max = config_.defense.m_max;
      cs.m_min = config_.defense.m_min;
      cs.decay = config_.defense.decay;
      cs.rounds = config_.rounds;
      schedule_ = ClassAssignmentSchedule::Build(cs, DeriveSeed(config_.seed, "schedule"));
      std::vector<double> weights;
      for (std::size_t k : config_.coalition) weights.push_back(static_cast<double>(sizes[k]));
      noise_plan_ = NoisePlan::Precompute(weights, config_.defense.perturb_sigma,
                                          config_.defense.perturb_ratio, config_.rounds,
                                          DeriveSeed(config_.seed, "noise-plan"));
    }
  }

  const ModelSpec& spec() const { return spec_; }
  const FlConfig& config() const { return config_; }
  const ParamVector& global() const { return global_; }
  const SnapshotStore& store() const { return store_; }
  const std::vector<RoundReport>& reports() const { return reports_; }
  const std::vector<CompensationTelemetry>& telemetry() const { return telemetry_; }
  const ClassAssignmentSchedule& schedule() const { return schedule_; }
  const NoisePlan& noise_plan() const { return noise_plan_; }
  const std::vector<ClientDataset>& clients() const { return clients_; }
  // Locals of the last round before any perturbation or baseline transform.
  const std::vector<ParamVector>& last_raw_locals() const { return raw_locals_; }
  int rounds_completed() const { return round_; }

  void RunRound() {
    const int t = round_ + 1;
    Require(t <= config_.rounds, "FederatedSimulation: all rounds already run");
    const std::size_t n = clients_.size();
    raw_locals_.assign(n, ParamVector());
    std::vector<ParamVector> sent(n);
    std::vector<CompensationTelemetry> round_telemetry(n);
    std::vector<char> has_telemetry(n, 0);

    auto work = [&](std::size_t k) {
      LocalStep(t, k, raw_locals_[k], sent[k], round_telemetry[k], has_telemetry[k]);
    };
    ForEachClient(n, work);

    std::vector<double> weights;
    for (const auto& c : clients_) weights.push_back(static_cast<double>(c.size()));
    ParamVector next = AggregateWeighted(sent, weights);

    RoundReport report;
    report.round = t;
    report.test_acc = test_.samples.empty() ? 0.0 : Accuracy(spec_, next, test_.samples);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (const auto& c : clients_) {
      for (const Sample& s : c.train) loss_sum += SampleLoss(spec_, next, s);
      for (const Sample& s : c.validation) loss_sum += SampleLoss(spec_, next, s);
      loss_count += c.size();
    }
    report.mean_train_loss = loss_sum / static_cast<double>(loss_count);
    report.client_sizes = store_.client_sizes();
    reports_.push_back(std::move(report));
    for (std::size_t k = 0; k < n; ++k) {
      if (has_telemetry[k]) telemetry_.push_back(round_telemetry[k]);
    }
    if (SnapshotStore::IsDue(t, config_.snapshot_every)) {
      store_.Add(Snapshot{t, global_, next, sent});
    }
    global_ = std::move(next);
    round_ = t;
  }

  TrainingResult Run() {
    while (round_ < config_.rounds) RunRound();
    return TrainingResult{store_, reports_, telemetry_, schedule_, global_};
  }

 private:
  std::size_t CoalitionPosition(std::size_t k) const {
    return static_cast<std::size_t>(
        std::find(config_.coalition.begin(), config_.coalition.end(), k) -
        config_.coalition.begin());
  }

  void LocalStep(int t, std::size_t k, ParamVector& raw, ParamVector& sent,
                 CompensationTelemetry& tel, char& has_tel) {
    const ClientDataset& client = clients_[k];
    SgdOptions sgd{config_.lr, config_.local_epochs, config_.batch_size,
                   DeriveSeed(config_.seed, "local-train", static_cast<std::int64_t>(k), t)};
    const DefenseConfig& d = config_.defense;
    const bool member = config_.IsCoalitionMember(k);

    if (d.kind == DefenseKind::kCoFedMid && member) {
      const std::size_t pos = CoalitionPosition(k);
      CompensationResult res = CompensatedLocalUpdate(
          spec_, client, t, global_, schedule_.subset(t, pos), d.recycle, sgd, bandits_[k],
          DeriveSeed(config_.seed, "recycle", static_cast<std::int64_t>(k), t));
      tel = res.telemetry;
      has_tel = 1;
      raw = std::move(res.params);
      sent = raw;
      if (d.perturb_sigma > 0.0) {
        sent = ApplyPerturbation(std::move(sent), noise_plan_.delta(t, pos), d.perturb_ratio);
      }
      return;
    }

    raw = SgdEpochs(spec_, global_, client.train, sgd);
    sent = raw;
    // Baselines protect the coalition, or every client when no coalition is named.
    const bool protect = config_.coalition.empty() || member;
    if (!protect) return;
    if (d.kind == DefenseKind::kGradSparse || d.kind == DefenseKind::kGradNoise) {
      ParamVector delta(raw.size());
      for (std::size_t i = 0; i < raw.size(); ++i) delta[i] = raw[i] - global_[i];
      delta = d.kind == DefenseKind::kGradSparse
                  ? GradSparsify(delta, d.keep_rate)
                  : GradGaussianNoise(delta, d.noise_sigma,
                                      DeriveSeed(config_.seed, "grad-noise",
                                                 static_cast<std::int64_t>(k), t));
      for (std::size_t i = 0; i < raw.size(); ++i) sent[i] = global_[i] + delta[i];
    }
  }

  // Runs fn(k) for every client, on up to config_.threads workers. Each
  // client writes only its own slots, so results do not depend on the
  // thread count.
  template <typename Fn>
  void ForEachClient(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(config_.threads, 1), n);
    if (workers <= 1) {
      for (std::size_t k = 0; k < n; ++k) fn(k);
      return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < n; k = next++) {
          try {
            fn(k);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  ModelSpec spec_;
  FlConfig config_;
  std::vector<ClientDataset> clients_;
  LabeledDataset test_;
  ParamVector global_;
  SnapshotStore store_;
  std::vector<RoundReport> reports_;
  std::vector<CompensationTelemetry> telemetry_;
  ClassAssignmentSchedule schedule_;
  NoisePlan noise_plan_;
  std::vector<Exp3Bandit> bandits_;
  std::vector<ParamVector> raw_locals_;
  int round_ = 0;
};

inline TrainingResult RunTraining(const ModelSpec& spec, const FlConfig& config,
                                  std::vector<ClientDataset> clients, LabeledDataset test) {
  FederatedSimulation sim(spec, config, std::move(clients), std::move(test));
  return sim.Run();
}

}  // namespace cofedmid
