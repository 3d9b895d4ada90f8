// cofedmid: train, attack, report and overhead subcommands over a config file.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "cofedmid/config.hpp"
#include "cofedmid/errors.hpp"
#include "cofedmid/experiment.hpp"
#include "cofedmid/snapshot_io.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::size_t threads = 0;
};

void AddCommonFlags(CLI::App* cmd, Overrides& o, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", o.config_path, "experiment config file")
                  ->check(CLI::ExistingFile);
  if (needs_config) opt->required();
  cmd->add_option("--seed", o.seed, "master seed (overrides config)");
  cmd->add_option("--out", o.out_dir, "output directory (overrides config)");
  cmd->add_option("--threads", o.threads, "worker threads for client training");
}

cofedmid::ExperimentConfig LoadConfig(const CLI::App* cmd, const Overrides& o) {
  cofedmid::ExperimentConfig config = cofedmid::ParseConfigFile(o.config_path);
  if (cmd->count("--seed")) config.seed = o.seed;
  if (cmd->count("--out")) config.output_dir = o.out_dir;
  if (cmd->count("--threads")) config.fl.threads = o.threads;
  return config;
}

void PrintSummary(const std::vector<cofedmid::SummaryRow>& rows) {
  for (const auto& r : rows) {
    std::cout << r.defense << ": final_test_acc=" << cofedmid::FormatDouble(r.final_test_acc);
    if (r.acc_delta) std::cout << " acc_delta=" << cofedmid::FormatDouble(*r.acc_delta);
    if (r.mean_attack_auc) {
      std::cout << " mean_attack_auc=" << cofedmid::FormatDouble(*r.mean_attack_auc);
    }
    std::cout << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CoFedMID federated membership-inference defense simulator"};
  app.require_subcommand(1);

  Overrides train_o, attack_o, report_o, run_o, overhead_o;
  auto* train = app.add_subcommand("train", "run federated training and record snapshots");
  AddCommonFlags(train, train_o);
  auto* attack = app.add_subcommand("attack", "run the configured attacks on recorded snapshots");
  AddCommonFlags(attack, attack_o);
  auto* report = app.add_subcommand("report", "write summary.csv from an output directory");
  AddCommonFlags(report, report_o);
  auto* run = app.add_subcommand("run", "train, attack and report in one go");
  AddCommonFlags(run, run_o);

  auto* overhead = app.add_subcommand("overhead", "coalition communication overhead in bytes");
  AddCommonFlags(overhead, overhead_o, false);
  std::uint64_t n_classes = 0, n_rounds = 0;
  overhead->add_option("--classes", n_classes, "number of classes N");
  overhead->add_option("--rounds", n_rounds, "number of rounds T");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const auto config = LoadConfig(train, train_o);
      const auto data = cofedmid::PrepareData(config);
      const auto result = cofedmid::TrainAndWrite(config, data, config.output_dir);
      std::cout << "trained " << result.reports.size() << " rounds, final test accuracy "
                << cofedmid::FormatDouble(result.reports.back().test_acc) << "\n";
    } else if (*attack) {
      const auto config = LoadConfig(attack, attack_o);
      const auto data = cofedmid::PrepareData(config);
      const std::filesystem::path dir(config.output_dir);
      const auto store = cofedmid::LoadSnapshots((dir / cofedmid::kSnapshotFile).string());
      const auto results = cofedmid::AttackAndWrite(config, data, store, dir);
      for (const auto& r : results) {
        std::cout << r.attack << " " << r.target << " auc=" << cofedmid::FormatDouble(r.auc)
                  << "\n";
      }
    } else if (*report) {
      PrintSummary(cofedmid::WriteReport(LoadConfig(report, report_o)));
    } else if (*run) {
      PrintSummary(cofedmid::RunExperiment(LoadConfig(run, run_o)));
    } else if (*overhead) {
      if (!overhead_o.config_path.empty()) {
        const auto config = LoadConfig(overhead, overhead_o);
        if (!overhead->count("--rounds")) n_rounds = static_cast<std::uint64_t>(config.fl.rounds);
        if (!overhead->count("--classes")) {
          n_classes = cofedmid::PrepareData(config).spec.num_classes;
        }
      } else if (!overhead->count("--rounds") || !overhead->count("--classes")) {
        std::cerr << "error: overhead needs --config or both --classes and --rounds\n";
        return 1;
      }
      std::cout << cofedmid::CommOverheadEstimate(n_classes, n_rounds) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
