#pragma once

// End-to-end orchestration: data preparation, training, attacks and CSV
// output. Everything is derived from the config's master seed, so reruns
// write byte-identical files.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cofedmid/attacks.hpp"
#include "cofedmid/config.hpp"
#include "cofedmid/data.hpp"
#include "cofedmid/errors.hpp"
#include "cofedmid/fed.hpp"
#include "cofedmid/metrics.hpp"
#include "cofedmid/model.hpp"
#include "cofedmid/partition.hpp"
#include "cofedmid/rng.hpp"
#include "cofedmid/snapshot_io.hpp"

namespace cofedmid {

inline constexpr const char* kRoundsHeader = "round,test_acc,mean_train_loss";
inline constexpr const char* kCompensationHeader =
    "round,client,arm,raw_reward,norm_reward,n_assigned,n_recycled";
inline constexpr const char* kAssignmentsHeader = "round,client,classes,lambda";
inline constexpr const char* kAttacksHeader =
    "attack,target,auc,tpr_at_fpr_0.001,tpr_at_fpr_0.01,tpr_at_fpr_0.1,n_members,n_nonmembers";
inline constexpr const char* kSummaryHeader =
    "defense,final_test_acc,acc_delta_vs_undefended,mean_attack_auc";
inline constexpr const char* kSnapshotFile = "snapshots.bin";

// Per round each client receives up to N class labels and two perturbation
// scalars; one byte per item over T rounds.
inline std::uint64_t CommOverheadEstimate(std::uint64_t num_classes, std::uint64_t rounds) {
  return (num_classes + 2) * rounds;
}

struct PreparedData {
  ModelSpec spec;
  LabeledDataset pool;  // data distributed to clients plus the OFL hold-out
  LabeledDataset test;
  PartitionPlan plan;
};

inline PreparedData PrepareData(const ExperimentConfig& config) {
  LabeledDataset all;
  if (config.data.source == "synthetic") {
    SyntheticOptions opts;
    opts.num_classes = config.data.num_classes;
    opts.samples_per_class = config.data.samples_per_class;
    opts.input_dim = config.data.input_dim;
    opts.cluster_spread = config.data.cluster_spread;
    opts.mean_radius = config.data.mean_radius;
    opts.seed = DeriveSeed(config.seed, "synthetic-data");
    all = GenerateSynthetic(opts);
  } else {
    all = LoadCsvDataset(config.data.path);
  }
  PreparedData out;
  auto [pool, test] = SplitTrainTest(all, config.data.test_fraction,
                                     DeriveSeed(config.seed, "train-test"));
  out.pool = std::move(pool);
  out.test = std::move(test);
  out.spec.input_dim = all.input_dim;
  out.spec.hidden_dim = config.hidden_dim;
  out.spec.num_classes = all.num_classes;
  const std::uint64_t part_seed = DeriveSeed(config.seed, "partition");
  out.plan = config.data.partition == "dirichlet"
                 ? PartitionDirichlet(out.pool, config.fl.num_clients, config.data.dirichlet_beta,
                                      config.data.ofl_fraction, part_seed)
                 : PartitionIid(out.pool, config.fl.num_clients, config.data.ofl_fraction,
                                part_seed);
  return out;
}

// Fills automatic partition sizes: m_max = 0 means N, m_min = 0 means the
// smallest size that still covers every class, ceil(N / d).
inline FlConfig ResolveFlConfig(const ExperimentConfig& config, std::size_t num_classes) {
  FlConfig fl = config.fl;
  fl.seed = config.seed;
  DefenseConfig& d = fl.defense;
  if (d.kind == DefenseKind::kCoFedMid) {
    const std::size_t n_coal = std::max<std::size_t>(fl.coalition.size(), 1);
    if (d.m_max == 0) d.m_max = num_classes;
    if (d.m_min == 0) d.m_min = std::min(d.m_max, (num_classes + n_coal - 1) / n_coal);
    if (d.m_max > num_classes) {
      throw ConfigError("partition.m_max: exceeds the dataset's " + std::to_string(num_classes) +
                        " classes");
    }
  }
  return fl;
}

inline TrainingResult TrainExperiment(const ExperimentConfig& config, const PreparedData& data) {
  const FlConfig fl = ResolveFlConfig(config, data.spec.num_classes);
  return RunTraining(data.spec, fl, MakeClientDatasets(data.pool, data.plan, fl), data.test);
}

struct AttackTarget {
  TargetSelector selector;
  AttackPool pool;
};

// Coalition clients are attacked one local model at a time (plus the
// coalition aggregate when adaptive); without a coalition the global model is
// the target and every client contributes members.
inline std::vector<AttackTarget> BuildAttackTargets(const ExperimentConfig& config,
                                                    const PreparedData& data) {
  std::vector<AttackTarget> targets;
  const EvalConfig& e = config.eval;
  const auto& coalition = config.fl.coalition;
  if (coalition.empty()) {
    std::vector<std::size_t> everyone(config.fl.num_clients);
    std::iota(everyone.begin(), everyone.end(), std::size_t{0});
    const EvalPools pools = BuildEvalPools(data.plan, everyone, e.members, 0,
                                           e.nonmembers_ofl + e.nonmembers_ifl,
                                           DeriveSeed(config.seed, "eval-pools"));
    targets.push_back({TargetSelector::Global(), MakeAttackPool(data.pool, pools)});
    return targets;
  }
  for (std::size_t k : coalition) {
    const EvalPools pools =
        BuildEvalPools(data.plan, k, e.members, e.nonmembers_ifl, e.nonmembers_ofl,
                       DeriveSeed(config.seed, "eval-pools", static_cast<std::int64_t>(k)));
    targets.push_back({TargetSelector::Local(k), MakeAttackPool(data.pool, pools)});
  }
  if (config.adaptive_attack) {
    const EvalPools pools = BuildEvalPools(data.plan, coalition, e.members, e.nonmembers_ifl,
                                           e.nonmembers_ofl,
                                           DeriveSeed(config.seed, "eval-pools-coalition"));
    targets.push_back({TargetSelector::CoalitionAggregate(coalition),
                       MakeAttackPool(data.pool, pools)});
  }
  return targets;
}

inline std::vector<AttackResult> RunAttacks(const ExperimentConfig& config,
                                            const PreparedData& data,
                                            const SnapshotStore& store) {
  std::vector<AttackResult> results;
  if (config.attacks.empty()) return results;
  for (const AttackTarget& target : BuildAttackTargets(config, data)) {
    for (const auto& name : config.attacks) {
      results.push_back(
          RunAttack(data.spec, store, target.selector, target.pool, ParseAttackName(name)));
    }
  }
  return results;
}

namespace detail {

inline std::ofstream OpenCsv(const std::filesystem::path& path, const char* header) {
  std::ofstream out(path);
  if (!out) throw ContractError("cannot write " + path.string());
  out << header << '\n';
  return out;
}

inline std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace detail

inline void WriteRoundsCsv(const std::filesystem::path& path,
                           const std::vector<RoundReport>& reports) {
  auto out = detail::OpenCsv(path, kRoundsHeader);
  for (const auto& r : reports) {
    out << r.round << ',' << FormatDouble(r.test_acc) << ',' << FormatDouble(r.mean_train_loss)
        << '\n';
  }
}

inline void WriteCompensationCsv(const std::filesystem::path& path,
                                 const std::vector<CompensationTelemetry>& telemetry) {
  auto out = detail::OpenCsv(path, kCompensationHeader);
  for (const auto& t : telemetry) {
    out << t.round << ',' << t.client << ',' << t.arm << ',' << FormatDouble(t.raw_reward) << ','
        << FormatDouble(t.norm_reward) << ',' << t.n_assigned << ',' << t.n_recycled << '\n';
  }
}

inline void WriteAssignmentsCsv(const std::filesystem::path& path,
                                const ClassAssignmentSchedule& schedule,
                                const std::vector<std::size_t>& coalition) {
  auto out = detail::OpenCsv(path, kAssignmentsHeader);
  for (int t = 1; t <= schedule.num_rounds(); ++t) {
    const ClassAssignment& a = schedule.round(t);
    for (std::size_t pos = 0; pos < coalition.size(); ++pos) {
      out << t << ',' << coalition[pos] << ',';
      const auto& classes = a.subsets[pos];
      for (std::size_t i = 0; i < classes.size(); ++i) out << (i ? ";" : "") << classes[i];
      out << ',' << a.lambda << '\n';
    }
  }
}

inline void WriteAttacksCsv(const std::filesystem::path& path,
                            const std::vector<AttackResult>& results) {
  auto out = detail::OpenCsv(path, kAttacksHeader);
  for (const auto& r : results) {
    out << r.attack << ',' << r.target << ',' << FormatDouble(r.auc);
    for (const auto& point : r.tpr_at_fpr) out << ',' << FormatDouble(point.tpr);
    out << ',' << r.n_members << ',' << r.n_nonmembers << '\n';
  }
}

struct SummaryRow {
  std::string defense;
  double final_test_acc = 0.0;
  std::optional<double> acc_delta;
  std::optional<double> mean_attack_auc;
};

inline void WriteSummaryCsv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  auto out = detail::OpenCsv(path, kSummaryHeader);
  for (const auto& r : rows) {
    out << r.defense << ',' << FormatDouble(r.final_test_acc) << ','
        << (r.acc_delta ? FormatDouble(*r.acc_delta) : "") << ','
        << (r.mean_attack_auc ? FormatDouble(*r.mean_attack_auc) : "") << '\n';
  }
}

// Rebuilds a summary row from rounds.csv and attacks.csv in `dir`.
inline SummaryRow SummarizeOutputDir(const std::filesystem::path& dir, std::string defense) {
  SummaryRow row;
  row.defense = std::move(defense);
  auto read_rows = [](const std::filesystem::path& path, const char* header) {
    std::ifstream in(path);
    if (!in) throw ContractError("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != header) {
      throw ContractError(path.string() + ": unexpected header");
    }
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
      if (!line.empty()) rows.push_back(detail::SplitCsvLine(line));
    }
    return rows;
  };
  const auto rounds = read_rows(dir / "rounds.csv", kRoundsHeader);
  if (rounds.empty()) throw ContractError("rounds.csv has no rows");
  row.final_test_acc = detail::ParseNumber<double>(rounds.back().at(1));
  const auto attacks = read_rows(dir / "attacks.csv", kAttacksHeader);
  if (!attacks.empty()) {
    double sum = 0.0;
    for (const auto& a : attacks) sum += detail::ParseNumber<double>(a.at(2));
    row.mean_attack_auc = sum / static_cast<double>(attacks.size());
  }
  return row;
}

inline TrainingResult TrainAndWrite(const ExperimentConfig& config, const PreparedData& data,
                                    const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  TrainingResult result = TrainExperiment(config, data);
  WriteRoundsCsv(dir / "rounds.csv", result.reports);
  WriteCompensationCsv(dir / "compensation.csv", result.telemetry);
  WriteAssignmentsCsv(dir / "assignments.csv", result.schedule, config.fl.coalition);
  SaveSnapshots(result.store, (dir / kSnapshotFile).string());
  std::ofstream(dir / "config.txt") << SerializeConfig(config);
  return result;
}

inline std::vector<AttackResult> AttackAndWrite(const ExperimentConfig& config,
                                                const PreparedData& data,
                                                const SnapshotStore& store,
                                                const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<AttackResult> results = RunAttacks(config, data, store);
  WriteAttacksCsv(dir / "attacks.csv", results);
  return results;
}

inline ExperimentConfig UndefendedVariant(ExperimentConfig config) {
  config.fl.defense.kind = DefenseKind::kNone;
  config.baseline = false;
  config.output_dir = (std::filesystem::path(config.output_dir) / "baseline").string();
  return config;
}

// Writes summary.csv in the output directory, adding the undefended row from
// the baseline/ subdirectory when one exists.
inline std::vector<SummaryRow> WriteReport(const ExperimentConfig& config) {
  const std::filesystem::path dir(config.output_dir);
  std::vector<SummaryRow> rows;
  const std::filesystem::path base_dir = dir / "baseline";
  const bool has_baseline = config.fl.defense.kind != DefenseKind::kNone &&
                            std::filesystem::exists(base_dir / "rounds.csv");
  if (has_baseline) rows.push_back(SummarizeOutputDir(base_dir, "none"));
  SummaryRow main = SummarizeOutputDir(dir, std::string(DefenseName(config.fl.defense.kind)));
  if (has_baseline) main.acc_delta = main.final_test_acc - rows.front().final_test_acc;
  rows.push_back(main);
  WriteSummaryCsv(dir / "summary.csv", rows);
  return rows;
}

// Train, attack and report; with config.baseline the undefended run goes to
// <output>/baseline first.
inline std::vector<SummaryRow> RunExperiment(const ExperimentConfig& config) {
  const PreparedData data = PrepareData(config);
  if (config.baseline && config.fl.defense.kind != DefenseKind::kNone) {
    const ExperimentConfig base = UndefendedVariant(config);
    const TrainingResult trained = TrainAndWrite(base, data, base.output_dir);
    AttackAndWrite(base, data, trained.store, base.output_dir);
  }
  const TrainingResult trained = TrainAndWrite(config, data, config.output_dir);
  AttackAndWrite(config, data, trained.store, config.output_dir);
  return WriteReport(config);
}

}  // namespace cofedmid
