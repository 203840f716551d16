#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mals/errors.hpp"
#include "mals/estimator.hpp"
#include "mals/input_design.hpp"
#include "mals/serialize.hpp"
#include "mals/system.hpp"

namespace mals {

struct ExperimentConfig {
  enum class Kind { Simple, Network, Custom };
  enum class Format { Csv, Json };

  Kind kind = Kind::Simple;
  std::optional<Index> horizon;
  std::vector<Index> rollout_grid;  // strictly increasing
  std::vector<std::uint64_t> seeds;
  std::string out;  // empty = stdout
  Format format = Format::Csv;
  int threads = 1;

  // Input design (defaults reproduce the simple-example settings:
  // nu ~ N(0, I), Ubar ~ Wishart(0.1 I, m)).
  double mean_cov_scale = 1.0;
  double wishart_scale = 0.1;
  Index wishart_dof = 0;  // 0 = input dimension

  NetworkSpec network;
  Index network_rollouts = 7;

  std::string system_file;  // custom experiment

  void validate() const {
    if (rollout_grid.empty()) throw ConfigError("config: rollout grid is empty");
    for (std::size_t i = 0; i + 1 < rollout_grid.size(); ++i)
      if (rollout_grid[i + 1] <= rollout_grid[i])
        throw ConfigError("config: rollout grid must be strictly increasing");
    if (rollout_grid.front() < 1) throw ConfigError("config: rollouts must be >= 1");
    if (seeds.empty()) throw ConfigError("config: seeds list is empty");
    if (horizon && *horizon < 2) throw ConfigError("config: horizon must be >= 2");
    if (threads < 1) throw ConfigError("config: threads must be >= 1");
    if (kind == Kind::Custom && system_file.empty())
      throw ConfigError("config: custom experiment requires a system file");
  }
};

inline ExperimentConfig::Format format_from_string(const std::string& s) {
  if (s == "csv") return ExperimentConfig::Format::Csv;
  if (s == "json") return ExperimentConfig::Format::Json;
  throw ConfigError("config: format must be 'csv' or 'json'");
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("experiment")) {
    const std::string kind = j["experiment"].get<std::string>();
    if (kind == "simple")
      cfg.kind = ExperimentConfig::Kind::Simple;
    else if (kind == "network")
      cfg.kind = ExperimentConfig::Kind::Network;
    else if (kind == "custom")
      cfg.kind = ExperimentConfig::Kind::Custom;
    else
      throw ConfigError("config: unknown experiment '" + kind + "'");
  }
  if (j.contains("horizon")) cfg.horizon = j["horizon"].get<Index>();
  if (j.contains("rollout_grid"))
    cfg.rollout_grid = j["rollout_grid"].get<std::vector<Index>>();
  if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("out")) cfg.out = j["out"].get<std::string>();
  if (j.contains("format")) cfg.format = format_from_string(j["format"].get<std::string>());
  if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
  if (j.contains("mean_cov_scale")) cfg.mean_cov_scale = j["mean_cov_scale"].get<double>();
  if (j.contains("wishart_scale")) cfg.wishart_scale = j["wishart_scale"].get<double>();
  if (j.contains("wishart_dof")) cfg.wishart_dof = j["wishart_dof"].get<Index>();
  if (j.contains("network")) cfg.network = network_spec_from_json(j["network"]);
  if (j.contains("network_rollouts"))
    cfg.network_rollouts = j["network_rollouts"].get<Index>();
  if (j.contains("system_file")) cfg.system_file = j["system_file"].get<std::string>();
  return cfg;
}

/// One (n_r, seed) measurement of the consistency experiment.
struct ErrorCurveRow {
  Index n_r;
  double relErr_AB;
  double relErr_SigmaA;
  double relErr_SigmaB;
  std::uint64_t seed;
};

struct ErrorCurve {
  std::vector<ErrorCurveRow> rows;
};

namespace detail {

/// Simulates n_r rollouts from x0 = 0. Work is split across threads;
/// every rollout's randomness is keyed by (seed, rollout index) alone,
/// so the batch is identical for any thread count.
template <typename SimulateOne>
RolloutBatch parallel_batch(Index n_r, int threads, SimulateOne&& simulate_one) {
  RolloutBatch batch;
  batch.rollouts.resize(n_r);
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n_r)));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w]() {
      try {
        for (Index k = w; k < n_r; k += workers) batch.rollouts[k] = simulate_one(k);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return batch;
}

inline std::vector<VectorXd> draw_inputs(const InputSchedule& schedule,
                                         std::uint64_t seed, Index k) {
  std::vector<VectorXd> inputs;
  inputs.reserve(schedule.horizon());
  for (Index t = 0; t < schedule.horizon(); ++t) {
    Substream rng(seed, kStreamInput, static_cast<std::uint64_t>(k),
                  static_cast<std::uint64_t>(t));
    inputs.push_back(sample_input(schedule, t, rng));
  }
  return inputs;
}

}  // namespace detail

// Deterministic nonzero start: a zero initial state leaves the mean
// dynamics excited by the input alone, which conditions both regressors
// poorly; x0 = 1 gives the first and second moments a free excitation.
inline RolloutBatch simulate_batch(const SystemModel& sys, const InputSchedule& schedule,
                                   Index n_r, std::uint64_t seed, int threads = 1) {
  const VectorXd x0 = VectorXd::Ones(sys.n);
  return detail::parallel_batch(n_r, threads, [&](Index k) {
    return simulate_rollout(sys, x0, detail::draw_inputs(schedule, seed, k), seed,
                            static_cast<std::uint64_t>(k));
  });
}

inline RolloutBatch simulate_batch(const MatrixXd& A, const MatrixXd& B,
                                   const EigenNoise& noise, const InputSchedule& schedule,
                                   Index n_r, std::uint64_t seed, int threads = 1) {
  const VectorXd x0 = VectorXd::Ones(A.rows());
  return detail::parallel_batch(n_r, threads, [&](Index k) {
    return simulate_rollout(A, B, noise, x0, detail::draw_inputs(schedule, seed, k),
                            seed, static_cast<std::uint64_t>(k));
  });
}

inline InputSchedule schedule_for(const ExperimentConfig& cfg, Index m, Index horizon,
                                  std::uint64_t seed) {
  const Index dof = cfg.wishart_dof > 0 ? cfg.wishart_dof : m;
  return design_schedule(m, horizon, cfg.mean_cov_scale * MatrixXd::Identity(m, m),
                         cfg.wishart_scale * MatrixXd::Identity(m, m), dof, seed);
}

/// Consistency curve for a known-truth system: one max-size batch per
/// seed, estimates taken on strictly growing rollout prefixes.
inline ErrorCurve run_consistency(const SystemModel& sys, const ExperimentConfig& cfg,
                                  EstimationResult* last_result = nullptr) {
  sys.validate();
  const Index l = cfg.horizon.value_or(min_horizon_second(sys.n, sys.m));
  const MatrixXd spA = sigma_prime_from_cov(sys.SigmaA, ReshapeSig(sys.n, sys.n, sys.n, sys.n));
  const MatrixXd spB = sigma_prime_from_cov(sys.SigmaB, ReshapeSig(sys.n, sys.m, sys.n, sys.m));
  const auto [trueTildeA, trueTildeB] = simplify_sigma(spA, spB, sys.n, sys.m);
  MatrixXd trueAB(sys.n, sys.n + sys.m);
  trueAB << sys.A, sys.B;

  ErrorCurve curve;
  for (const std::uint64_t seed : cfg.seeds) {
    const InputSchedule schedule = schedule_for(cfg, sys.m, l, seed);
    const Index max_nr = cfg.rollout_grid.back();
    const RolloutBatch batch = simulate_batch(sys, schedule, max_nr, seed, cfg.threads);
    for (const Index nr : cfg.rollout_grid) {
      const MomentEstimates est = aggregate(batch, schedule, nr);
      const NominalEstimate nom = estimate_nominal(est, schedule);
      const CovarianceEstimate cov =
          estimate_covariance(est, nom.Ahat, nom.Bhat, schedule);
      MatrixXd abhat(sys.n, sys.n + sys.m);
      abhat << nom.Ahat, nom.Bhat;
      ErrorCurveRow row;
      row.n_r = nr;
      row.relErr_AB = rel_fro_error(abhat, trueAB);
      row.relErr_SigmaA = rel_fro_error(cov.tildeSigmaAhat, trueTildeA);
      row.relErr_SigmaB = rel_fro_error(cov.tildeSigmaBhat, trueTildeB);
      row.seed = seed;
      curve.rows.push_back(row);
      if (last_result) {
        last_result->Ahat = nom.Ahat;
        last_result->Bhat = nom.Bhat;
        last_result->tildeSigmaAhat = cov.tildeSigmaAhat;
        last_result->tildeSigmaBhat = cov.tildeSigmaBhat;
        last_result->certZ = nom.certZ;
        last_result->certD = cov.certD;
        last_result->metrics["relErr_AB"] = row.relErr_AB;
        last_result->metrics["relErr_SigmaA"] = row.relErr_SigmaA;
        last_result->metrics["relErr_SigmaB"] = row.relErr_SigmaB;
        last_result->seed = seed;
        last_result->n_r = nr;
        last_result->horizon = l;
      }
    }
  }
  return curve;
}

inline ErrorCurve run_simple(const ExperimentConfig& cfg) {
  return run_consistency(simple_example_system(), cfg);
}

/// Per-seed summary of the network variance study.
struct NetworkStudyRow {
  std::uint64_t seed;
  double mean_sigma, max_sigma, mean_delta, max_delta;
  bool negative_estimates;
  bool full_rank;
};

struct NetworkStudyResult {
  std::vector<NetworkStudyRow> rows;
  std::vector<std::string> flags;
};

inline NetworkStudyResult run_network(const ExperimentConfig& cfg) {
  NetworkStudyResult result;
  for (const std::uint64_t seed : cfg.seeds) {
    NetworkSpec spec = cfg.network;
    spec.seed = seed;
    auto [model, noise] = build_network_system(spec);
    const Index l = cfg.horizon.value_or(min_horizon_second(model.n, model.m));
    const InputSchedule schedule = schedule_for(cfg, model.m, l, seed);
    const Index n_r =
        cfg.rollout_grid.empty() ? cfg.network_rollouts : cfg.rollout_grid.back();
    const RolloutBatch batch =
        simulate_batch(model.A, model.B, noise, schedule, n_r, seed, cfg.threads);
    const MomentEstimates est = aggregate(batch, schedule);
    const NominalEstimate nom = estimate_nominal(est, schedule);
    const VarianceResult var =
        estimate_variances_known_directions(est, nom.Ahat, nom.Bhat, noise, schedule);
    const VarianceErrorMetrics metrics = variance_error_metrics(var, noise);
    NetworkStudyRow row;
    row.seed = seed;
    row.mean_sigma = metrics.mean_sigma;
    row.max_sigma = metrics.max_sigma;
    row.mean_delta = metrics.mean_delta;
    row.max_delta = metrics.max_delta;
    row.negative_estimates = var.has_negative;
    row.full_rank = var.cert.full_rank && nom.certZ.full_rank;
    result.rows.push_back(row);
    for (const auto& f : metrics.flags)
      result.flags.push_back("seed " + std::to_string(seed) + ": " + f);
    if (!row.full_rank)
      result.flags.push_back("seed " + std::to_string(seed) +
                             ": rank-deficient regressor");
  }
  return result;
}

/// Full pipeline on a user-supplied system; also returns the final
/// estimate with metrics against the file's ground truth.
inline std::pair<EstimationResult, ErrorCurve> run_custom(const ExperimentConfig& cfg) {
  const SystemModel sys = system_from_json(load_json_file(cfg.system_file));
  EstimationResult result;
  ErrorCurve curve = run_consistency(sys, cfg, &result);
  return {std::move(result), std::move(curve)};
}

// ---- deterministic text output ----

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string curve_to_csv(const ErrorCurve& curve) {
  std::string out = "n_r,relErr_AB,relErr_SigmaA,relErr_SigmaB,seed\n";
  for (const auto& r : curve.rows) {
    out += std::to_string(r.n_r) + "," + format_double(r.relErr_AB) + "," +
           format_double(r.relErr_SigmaA) + "," + format_double(r.relErr_SigmaB) + "," +
           std::to_string(r.seed) + "\n";
  }
  return out;
}

inline json curve_to_json(const ErrorCurve& curve) {
  json rows = json::array();
  for (const auto& r : curve.rows)
    rows.push_back(json{{"n_r", r.n_r},
                        {"relErr_AB", r.relErr_AB},
                        {"relErr_SigmaA", r.relErr_SigmaA},
                        {"relErr_SigmaB", r.relErr_SigmaB},
                        {"seed", r.seed}});
  return json{{"curve", std::move(rows)}};
}

inline std::string network_to_csv(const NetworkStudyResult& result) {
  std::string out =
      "seed,mean_sigma2_err,max_sigma2_err,mean_delta2_err,max_delta2_err,"
      "negative_estimates,full_rank\n";
  for (const auto& r : result.rows) {
    out += std::to_string(r.seed) + "," + format_double(r.mean_sigma) + "," +
           format_double(r.max_sigma) + "," + format_double(r.mean_delta) + "," +
           format_double(r.max_delta) + "," + (r.negative_estimates ? "1" : "0") + "," +
           (r.full_rank ? "1" : "0") + "\n";
  }
  return out;
}

inline json network_to_json(const NetworkStudyResult& result) {
  json rows = json::array();
  for (const auto& r : result.rows)
    rows.push_back(json{{"seed", r.seed},
                        {"mean_sigma2_err", r.mean_sigma},
                        {"max_sigma2_err", r.max_sigma},
                        {"mean_delta2_err", r.mean_delta},
                        {"max_delta2_err", r.max_delta},
                        {"negative_estimates", r.negative_estimates},
                        {"full_rank", r.full_rank}});
  return json{{"network_study", std::move(rows)}, {"flags", result.flags}};
}

}  // namespace mals
