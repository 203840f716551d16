// mals: identify linear systems with multiplicative noise from rollout data.
//
//   mals simple  --rollouts 100,1000 --seed 1 --out curve.csv
//   mals network --seed 1,2,3 --out study.csv
//   mals custom  --config cfg.json
//
// Exits 0 on success, 2 on configuration errors, 3 on numerical failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mals/experiment.hpp"

namespace {

struct Flags {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::vector<mals::Index> rollouts;
  std::optional<mals::Index> horizon;
  std::string out;
  std::string format;
  int threads = 0;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file");
  cmd->add_option("--seed", f.seeds, "seed list")->delimiter(',');
  cmd->add_option("--rollouts", f.rollouts, "rollout counts")->delimiter(',');
  cmd->add_option("--horizon", f.horizon, "rollout horizon");
  cmd->add_option("--out", f.out, "output file (default stdout)");
  cmd->add_option("--format", f.format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--threads", f.threads, "simulation threads")
      ->check(CLI::PositiveNumber);
}

mals::ExperimentConfig build_config(const Flags& f, mals::ExperimentConfig::Kind kind,
                                    const std::string& system_file = {}) {
  mals::ExperimentConfig cfg;
  if (!f.config.empty()) cfg = mals::config_from_json(mals::load_json_file(f.config));
  cfg.kind = kind;  // the subcommand wins over the config file
  if (!system_file.empty()) cfg.system_file = system_file;
  if (!f.seeds.empty()) cfg.seeds = f.seeds;
  if (!f.rollouts.empty()) cfg.rollout_grid = f.rollouts;
  if (f.horizon) cfg.horizon = f.horizon;
  if (!f.out.empty()) cfg.out = f.out;
  if (!f.format.empty()) cfg.format = mals::format_from_string(f.format);
  if (f.threads > 0) cfg.threads = f.threads;
  if (cfg.seeds.empty()) cfg.seeds = {1};
  if (cfg.rollout_grid.empty()) {
    cfg.rollout_grid = kind == mals::ExperimentConfig::Kind::Network
                           ? std::vector<mals::Index>{cfg.network_rollouts}
                           : std::vector<mals::Index>{1000};
  }
  cfg.validate();
  return cfg;
}

void emit(const mals::ExperimentConfig& cfg, const std::string& text) {
  if (cfg.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(cfg.out, std::ios::binary);
  if (!f) throw mals::ConfigError("cannot open output file '" + cfg.out + "'");
  f << text;
}

std::string render(const mals::ExperimentConfig& cfg, const mals::ErrorCurve& curve,
                   const mals::EstimationResult* result = nullptr) {
  if (cfg.format == mals::ExperimentConfig::Format::Csv) return mals::curve_to_csv(curve);
  mals::json j = mals::curve_to_json(curve);
  if (result) j["estimate"] = mals::to_json(*result);
  return j.dump(2) + "\n";
}

int run(const Flags& f, mals::ExperimentConfig::Kind kind,
        const std::string& system_file = {}) {
  const mals::ExperimentConfig cfg = build_config(f, kind, system_file);
  switch (kind) {
    case mals::ExperimentConfig::Kind::Simple:
      emit(cfg, render(cfg, mals::run_simple(cfg)));
      break;
    case mals::ExperimentConfig::Kind::Network: {
      const mals::NetworkStudyResult study = mals::run_network(cfg);
      for (const auto& flag : study.flags) std::cerr << "warning: " << flag << "\n";
      emit(cfg, cfg.format == mals::ExperimentConfig::Format::Csv
                    ? mals::network_to_csv(study)
                    : mals::network_to_json(study).dump(2) + "\n");
      break;
    }
    case mals::ExperimentConfig::Kind::Custom: {
      auto [result, curve] = mals::run_custom(cfg);
      emit(cfg, render(cfg, curve, &result));
      break;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"identification of linear systems with multiplicative noise"};
  app.require_subcommand(1);

  Flags flags;
  std::string system_file;
  CLI::App* simple = app.add_subcommand("simple", "two-state consistency experiment");
  CLI::App* network = app.add_subcommand("network", "networked variance study");
  CLI::App* custom = app.add_subcommand("custom", "estimate a user-supplied system");
  add_common(simple, flags);
  add_common(network, flags);
  add_common(custom, flags);
  custom->add_option("--system", system_file, "system description (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    mals::ExperimentConfig::Kind kind = mals::ExperimentConfig::Kind::Simple;
    if (network->parsed()) kind = mals::ExperimentConfig::Kind::Network;
    if (custom->parsed()) kind = mals::ExperimentConfig::Kind::Custom;
    return run(flags, kind, system_file);
  } catch (const mals::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mals::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
