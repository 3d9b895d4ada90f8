#pragma once

// Datasets, client partitioning and membership evaluation pools.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cofedmid/errors.hpp"
#include "cofedmid/model.hpp"
#include "cofedmid/rng.hpp"

namespace cofedmid {

struct LabeledDataset {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }

  void Validate() const {
    for (const Sample& s : samples) {
      Require(s.x.size() == input_dim, "dataset: feature width mismatch");
      Require(s.label >= 0 && static_cast<std::size_t>(s.label) < num_classes,
              "dataset: label out of range");
    }
  }

  bool operator==(const LabeledDataset&) const = default;
};

inline std::vector<std::size_t> ClassHistogram(std::span<const Sample> samples,
                                               std::size_t num_classes) {
  std::vector<std::size_t> hist(num_classes, 0);
  for (const Sample& s : samples) ++hist[static_cast<std::size_t>(s.label)];
  return hist;
}

inline LabeledDataset Subset(const LabeledDataset& data,
                             std::span<const std::size_t> ids) {
  LabeledDataset out{data.input_dim, data.num_classes, {}};
  out.samples.reserve(ids.size());
  for (std::size_t id : ids) out.samples.push_back(data.samples.at(id));
  return out;
}

struct SyntheticOptions {
  std::size_t num_classes = 10;
  std::size_t samples_per_class = 100;
  std::size_t input_dim = 20;
  double cluster_spread = 1.0;
  // Distance of every class mean from the origin.
  double mean_radius = 5.0;
  std::uint64_t seed = 0;
};

// Gaussian class clusters. Means are random directions scaled to mean_radius,
// made mutually orthogonal (Gram-Schmidt) while num_classes <= input_dim.
// Samples are emitted class by class.
inline LabeledDataset GenerateSynthetic(const SyntheticOptions& opts) {
  Require(opts.num_classes >= 1 && opts.samples_per_class >= 1 && opts.input_dim >= 1,
          "GenerateSynthetic: counts must be positive");
  Require(opts.cluster_spread >= 0.0, "GenerateSynthetic: negative spread");
  Rng mean_rng = MakeRng(opts.seed, "synthetic-means");
  Rng sample_rng = MakeRng(opts.seed, "synthetic-samples");
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t d = opts.input_dim;
  std::vector<std::vector<double>> means;
  for (std::size_t c = 0; c < opts.num_classes; ++c) {
    std::vector<double> m(d);
    for (double& v : m) v = normal(mean_rng);
    if (c < d) {
      for (const auto& prev : means) {
        const double dot = std::inner_product(m.begin(), m.end(), prev.begin(), 0.0);
        const double pp = std::inner_product(prev.begin(), prev.end(), prev.begin(), 0.0);
        for (std::size_t i = 0; i < d; ++i) m[i] -= dot / pp * prev[i];
      }
    }
    const double norm = std::sqrt(std::inner_product(m.begin(), m.end(), m.begin(), 0.0));
    for (double& v : m) v = v / norm * opts.mean_radius;
    means.push_back(std::move(m));
  }

  LabeledDataset out{d, opts.num_classes, {}};
  out.samples.reserve(opts.num_classes * opts.samples_per_class);
  for (std::size_t c = 0; c < opts.num_classes; ++c) {
    for (std::size_t n = 0; n < opts.samples_per_class; ++n) {
      Sample s;
      s.label = static_cast<int>(c);
      s.x.resize(d);
      for (std::size_t i = 0; i < d; ++i) {
        s.x[i] = means[c][i] + opts.cluster_spread * normal(sample_rng);
      }
      out.samples.push_back(std::move(s));
    }
  }
  return out;
}

// Splits a dataset into (train, test) by seeded shuffle. The first
// floor(test_fraction * n) shuffled samples form the test set.
inline std::pair<LabeledDataset, LabeledDataset> SplitTrainTest(
    const LabeledDataset& data, double test_fraction, std::uint64_t seed) {
  Require(test_fraction >= 0.0 && test_fraction < 1.0,
          "SplitTrainTest: test_fraction must be in [0,1)");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = MakeRng(seed, "train-test-split");
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(
      std::floor(test_fraction * static_cast<double>(data.size()) + 1e-9));
  std::vector<std::size_t> test_ids(order.begin(), order.begin() + n_test);
  std::vector<std::size_t> train_ids(order.begin() + n_test, order.end());
  std::sort(test_ids.begin(), test_ids.end());
  std::sort(train_ids.begin(), train_ids.end());
  return {Subset(data, train_ids), Subset(data, test_ids)};
}

// Reads `f0,...,f{d-1},label` CSV. num_classes is max(label)+1 unless a
// larger value is supplied.
inline LabeledDataset LoadCsvDataset(const std::string& path,
                                     std::size_t num_classes = 0) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ContractError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header.back() != "label") {
    throw ContractError(path + ": header must be f0,...,f{d-1},label");
  }
  const std::size_t d = header.size() - 1;
  for (std::size_t i = 0; i < d; ++i) {
    if (header[i] != "f" + std::to_string(i)) {
      throw ContractError(path + ": header column " + std::to_string(i) +
                          " must be f" + std::to_string(i));
    }
  }

  LabeledDataset out{d, 0, {}};
  int max_label = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Sample s;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::string where = path + ":" + std::to_string(line_no);
    if (cells.size() != d + 1) throw ContractError(where + ": expected " + std::to_string(d + 1) + " fields");
    try {
      for (std::size_t i = 0; i < d; ++i) {
        std::size_t used = 0;
        const double v = std::stod(cells[i], &used);
        if (used != cells[i].size() || !std::isfinite(v)) throw std::invalid_argument("bad");
        s.x.push_back(v);
      }
      std::size_t used = 0;
      const long label = std::stol(cells[d], &used);
      if (used != cells[d].size() || label < 0) throw std::invalid_argument("bad");
      s.label = static_cast<int>(label);
    } catch (const std::logic_error&) {
      throw ContractError(where + ": malformed value");
    }
    max_label = std::max(max_label, s.label);
    out.samples.push_back(std::move(s));
  }
  out.num_classes = std::max<std::size_t>(num_classes, static_cast<std::size_t>(max_label + 1));
  if (num_classes != 0 && static_cast<std::size_t>(max_label) >= num_classes) {
    throw ContractError(path + ": label exceeds configured num_classes");
  }
  return out;
}

struct PartitionPlan {
  std::vector<std::vector<std::size_t>> client_indices;  // each sorted
  std::vector<std::size_t> ofl_indices;                  // sorted

  std::size_t num_clients() const { return client_indices.size(); }
};

namespace detail {

inline std::size_t FloorFraction(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

// Shuffles all indices and carves the OFL pool from the front.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> CarveOfl(
    std::size_t n, double ofl_fraction, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_ofl = FloorFraction(ofl_fraction, n);
  std::vector<std::size_t> ofl(order.begin(), order.begin() + n_ofl);
  std::vector<std::size_t> rest(order.begin() + n_ofl, order.end());
  std::sort(ofl.begin(), ofl.end());
  return {std::move(ofl), std::move(rest)};
}

}  // namespace detail

// Even split: shares differ by at most one sample.
inline PartitionPlan PartitionIid(const LabeledDataset& data, std::size_t num_clients,
                                  double ofl_fraction, std::uint64_t seed) {
  Require(num_clients >= 2, "PartitionIid: need at least 2 clients");
  Require(ofl_fraction >= 0.0 && ofl_fraction < 1.0,
          "PartitionIid: ofl_fraction must be in [0,1)");
  Rng rng = MakeRng(seed, "partition-iid");
  auto [ofl, rest] = detail::CarveOfl(data.size(), ofl_fraction, rng);
  if (rest.size() < num_clients) {
    throw ContractError("PartitionIid: fewer samples than clients");
  }
  PartitionPlan plan;
  plan.ofl_indices = std::move(ofl);
  plan.client_indices.resize(num_clients);
  const std::size_t base = rest.size() / num_clients;
  const std::size_t extra = rest.size() % num_clients;
  std::size_t pos = 0;
  for (std::size_t k = 0; k < num_clients; ++k) {
    const std::size_t take = base + (k < extra ? 1 : 0);
    auto& ids = plan.client_indices[k];
    ids.assign(rest.begin() + pos, rest.begin() + pos + take);
    std::sort(ids.begin(), ids.end());
    pos += take;
  }
  return plan;
}

inline std::vector<double> SampleDirichlet(std::size_t k, double beta, Rng& rng) {
  std::gamma_distribution<double> gamma(beta, 1.0);
  std::vector<double> p(k);
  double sum = 0.0;
  for (double& v : p) {
    v = gamma(rng);
    sum += v;
  }
  if (sum <= 0.0) {
    // Every draw underflowed (tiny beta): all mass on one uniformly chosen client.
    std::fill(p.begin(), p.end(), 0.0);
    p[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)] = 1.0;
    return p;
  }
  for (double& v : p) v /= sum;
  return p;
}

// Per-class Dirichlet(beta) proportions over clients. A plan that leaves any
// client empty is redrawn from seed+1, up to 100 redraws.
inline PartitionPlan PartitionDirichlet(const LabeledDataset& data,
                                        std::size_t num_clients, double beta,
                                        double ofl_fraction, std::uint64_t seed) {
  Require(num_clients >= 2, "PartitionDirichlet: need at least 2 clients");
  Require(beta > 0.0, "PartitionDirichlet: beta must be positive");
  Require(ofl_fraction >= 0.0 && ofl_fraction < 1.0,
          "PartitionDirichlet: ofl_fraction must be in [0,1)");
  constexpr int kMaxRedraws = 100;
  for (int attempt = 0; attempt <= kMaxRedraws; ++attempt) {
    Rng rng = MakeRng(seed + static_cast<std::uint64_t>(attempt), "partition-dirichlet");
    auto [ofl, rest] = detail::CarveOfl(data.size(), ofl_fraction, rng);
    std::vector<std::vector<std::size_t>> by_class(data.num_classes);
    std::sort(rest.begin(), rest.end());
    for (std::size_t id : rest) {
      by_class[static_cast<std::size_t>(data.samples[id].label)].push_back(id);
    }
    PartitionPlan plan;
    plan.ofl_indices = std::move(ofl);
    plan.client_indices.resize(num_clients);
    for (auto& ids : by_class) {
      if (ids.empty()) continue;
      std::shuffle(ids.begin(), ids.end(), rng);
      const std::vector<double> p = SampleDirichlet(num_clients, beta, rng);
      double cumulative = 0.0;
      std::size_t start = 0;
      for (std::size_t k = 0; k < num_clients; ++k) {
        cumulative += p[k];
        std::size_t stop = k + 1 == num_clients
                               ? ids.size()
                               : std::min(ids.size(), detail::FloorFraction(cumulative, ids.size()));
        stop = std::max(stop, start);
        plan.client_indices[k].insert(plan.client_indices[k].end(),
                                      ids.begin() + start, ids.begin() + stop);
        start = stop;
      }
    }
    bool any_empty = false;
    for (auto& ids : plan.client_indices) {
      std::sort(ids.begin(), ids.end());
      any_empty = any_empty || ids.empty();
    }
    if (!any_empty) return plan;
  }
  throw ContractError("PartitionDirichlet: exceeded 100 redraws without a non-empty plan");
}

struct EvalPools {
  std::vector<std::size_t> members;
  std::vector<std::size_t> non_members_ifl;
  std::vector<std::size_t> non_members_ofl;
};

namespace detail {

inline std::vector<std::size_t> SampleWithoutReplacement(std::vector<std::size_t> pool,
                                                         std::size_t n, Rng& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// Splits `total` across `parts` equally, remainder to the first parts.
inline std::vector<std::size_t> EqualShares(std::size_t total, std::size_t parts) {
  std::vector<std::size_t> shares(parts, total / parts);
  for (std::size_t i = 0; i < total % parts; ++i) ++shares[i];
  return shares;
}

}  // namespace detail

// Members come equally from the target clients, IFL non-members equally from
// every other client, OFL non-members from the held-out pool. Remainders go
// round-robin to the lowest client ids.
inline EvalPools BuildEvalPools(const PartitionPlan& plan,
                                std::span<const std::size_t> target_clients,
                                std::size_t members_n, std::size_t ifl_n,
                                std::size_t ofl_n, std::uint64_t seed) {
  Require(!target_clients.empty(), "BuildEvalPools: no target client");
  std::set<std::size_t> targets(target_clients.begin(), target_clients.end());
  for (std::size_t t : targets) {
    Require(t < plan.num_clients(), "BuildEvalPools: target client out of range");
  }
  std::vector<std::size_t> others;
  for (std::size_t k = 0; k < plan.num_clients(); ++k) {
    if (!targets.count(k)) others.push_back(k);
  }
  Rng rng = MakeRng(seed, "eval-pools");
  EvalPools pools;

  const std::vector<std::size_t> target_list(targets.begin(), targets.end());
  const auto member_shares = detail::EqualShares(members_n, target_list.size());
  for (std::size_t i = 0; i < target_list.size(); ++i) {
    const auto& ids = plan.client_indices[target_list[i]];
    if (ids.size() < member_shares[i]) {
      throw ContractError("BuildEvalPools: client " + std::to_string(target_list[i]) +
                          " holds fewer samples than requested members");
    }
    auto picked = detail::SampleWithoutReplacement(ids, member_shares[i], rng);
    pools.members.insert(pools.members.end(), picked.begin(), picked.end());
  }

  if (ifl_n > 0) {
    if (others.empty()) throw ContractError("BuildEvalPools: no non-target clients for IFL pool");
    const auto shares = detail::EqualShares(ifl_n, others.size());
    for (std::size_t i = 0; i < others.size(); ++i) {
      const auto& ids = plan.client_indices[others[i]];
      if (ids.size() < shares[i]) {
        throw ContractError("BuildEvalPools: client " + std::to_string(others[i]) +
                            " cannot supply " + std::to_string(shares[i]) + " IFL samples");
      }
      auto picked = detail::SampleWithoutReplacement(ids, shares[i], rng);
      pools.non_members_ifl.insert(pools.non_members_ifl.end(), picked.begin(), picked.end());
    }
  }

  if (plan.ofl_indices.size() < ofl_n) {
    throw ContractError("BuildEvalPools: OFL pool holds " +
                        std::to_string(plan.ofl_indices.size()) + " samples, " +
                        std::to_string(ofl_n) + " requested");
  }
  pools.non_members_ofl = detail::SampleWithoutReplacement(plan.ofl_indices, ofl_n, rng);
  std::sort(pools.members.begin(), pools.members.end());
  std::sort(pools.non_members_ifl.begin(), pools.non_members_ifl.end());
  return pools;
}

inline EvalPools BuildEvalPools(const PartitionPlan& plan, std::size_t target_client,
                                std::size_t members_n, std::size_t ifl_n,
                                std::size_t ofl_n, std::uint64_t seed) {
  return BuildEvalPools(plan, std::span<const std::size_t>(&target_client, 1),
                        members_n, ifl_n, ofl_n, seed);
}

// A client's local data: a seeded validation slice (used only by the
// compensation reward) and the remaining training pool, both in original
// index order.
struct ClientDataset {
  std::size_t client_id = 0;
  std::vector<std::size_t> train_ids;
  std::vector<Sample> train;
  std::vector<std::size_t> validation_ids;
  std::vector<Sample> validation;
  std::vector<std::size_t> class_histogram;

  // |D_k|: the full local dataset size, validation included.
  std::size_t size() const { return train.size() + validation.size(); }
};

inline ClientDataset MakeClientDataset(const LabeledDataset& data, std::size_t client_id,
                                       std::span<const std::size_t> indices,
                                       double val_fraction, std::uint64_t seed) {
  Require(val_fraction >= 0.0 && val_fraction < 1.0,
          "MakeClientDataset: val_fraction must be in [0,1)");
  ClientDataset out;
  out.client_id = client_id;
  std::vector<std::size_t> order(indices.begin(), indices.end());
  std::size_t n_val = static_cast<std::size_t>(
      std::ceil(val_fraction * static_cast<double>(order.size()) - 1e-9));
  if (n_val >= order.size()) n_val = order.empty() ? 0 : order.size() - 1;
  if (n_val > 0) {
    Rng rng = MakeRng(seed, "validation-split", static_cast<std::int64_t>(client_id));
    std::shuffle(order.begin(), order.end(), rng);
  }
  out.validation_ids.assign(order.begin(), order.begin() + n_val);
  out.train_ids.assign(order.begin() + n_val, order.end());
  std::sort(out.validation_ids.begin(), out.validation_ids.end());
  std::sort(out.train_ids.begin(), out.train_ids.end());
  for (std::size_t id : out.train_ids) out.train.push_back(data.samples.at(id));
  for (std::size_t id : out.validation_ids) out.validation.push_back(data.samples.at(id));
  std::vector<Sample> all = out.train;
  all.insert(all.end(), out.validation.begin(), out.validation.end());
  out.class_histogram = ClassHistogram(all, data.num_classes);
  return out;
}

}  // namespace cofedmid
