#pragma once

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "mals/errors.hpp"
#include "mals/estimator.hpp"
#include "mals/input_design.hpp"
#include "mals/system.hpp"

// Structured-text (JSON) serialization. Matrices are stored as row-major
// flat arrays next to their dimensions.

namespace mals {

using nlohmann::json;

inline json matrix_to_json(const MatrixXd& m) {
  json arr = json::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) arr.push_back(m(i, j));
  return arr;
}

inline MatrixXd matrix_from_json(const json& arr, Index rows, Index cols,
                                 const std::string& name) {
  if (!arr.is_array() || static_cast<Index>(arr.size()) != rows * cols)
    throw ConfigError(name + ": expected " + std::to_string(rows * cols) +
                      " row-major entries");
  MatrixXd m(rows, cols);
  Index k = 0;
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = arr[k++].get<double>();
  return m;
}

namespace detail {
inline const json& require(const json& j, const std::string& field,
                           const std::string& context) {
  auto it = j.find(field);
  if (it == j.end())
    throw ConfigError(context + ": missing field '" + field + "'");
  return *it;
}
}  // namespace detail

inline json to_json(const SystemModel& sys) {
  return json{{"n", sys.n},
              {"m", sys.m},
              {"A", matrix_to_json(sys.A)},
              {"B", matrix_to_json(sys.B)},
              {"SigmaA", matrix_to_json(sys.SigmaA)},
              {"SigmaB", matrix_to_json(sys.SigmaB)}};
}

inline SystemModel system_from_json(const json& j) {
  SystemModel sys;
  sys.n = detail::require(j, "n", "SystemModel").get<Index>();
  sys.m = detail::require(j, "m", "SystemModel").get<Index>();
  if (sys.n < 1 || sys.m < 1) throw ConfigError("SystemModel: n and m must be >= 1");
  sys.A = matrix_from_json(detail::require(j, "A", "SystemModel"), sys.n, sys.n, "A");
  sys.B = matrix_from_json(detail::require(j, "B", "SystemModel"), sys.n, sys.m, "B");
  sys.SigmaA = matrix_from_json(detail::require(j, "SigmaA", "SystemModel"),
                                sys.n * sys.n, sys.n * sys.n, "SigmaA");
  sys.SigmaB = matrix_from_json(detail::require(j, "SigmaB", "SystemModel"),
                                sys.n * sys.m, sys.n * sys.m, "SigmaB");
  sys.validate();
  return sys;
}

inline json to_json(const NetworkSpec& spec) {
  json j{{"nodes", spec.nodes},
         {"edge_prob", spec.edge_prob},
         {"weight_min", spec.weight_min},
         {"weight_max", spec.weight_max},
         {"step", spec.step},
         {"var_min", spec.var_min},
         {"var_max", spec.var_max},
         {"seed", spec.seed}};
  if (spec.loss_diagonal.size())
    j["loss_diagonal"] = matrix_to_json(spec.loss_diagonal);
  if (spec.input_gain.size()) j["input_gain"] = matrix_to_json(spec.input_gain);
  return j;
}

inline NetworkSpec network_spec_from_json(const json& j) {
  NetworkSpec spec;
  if (j.contains("nodes")) spec.nodes = j["nodes"].get<Index>();
  if (j.contains("edge_prob")) spec.edge_prob = j["edge_prob"].get<double>();
  if (j.contains("weight_min")) spec.weight_min = j["weight_min"].get<int>();
  if (j.contains("weight_max")) spec.weight_max = j["weight_max"].get<int>();
  if (j.contains("step")) spec.step = j["step"].get<double>();
  if (j.contains("var_min")) spec.var_min = j["var_min"].get<double>();
  if (j.contains("var_max")) spec.var_max = j["var_max"].get<double>();
  if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("loss_diagonal"))
    spec.loss_diagonal = matrix_from_json(j["loss_diagonal"], spec.nodes, 1, "loss_diagonal");
  if (j.contains("input_gain"))
    spec.input_gain = matrix_from_json(j["input_gain"], spec.nodes, 1, "input_gain");
  spec.validate();
  return spec;
}

inline json to_json(const InputSchedule& schedule) {
  json nus = json::array(), ubars = json::array();
  for (const auto& nu : schedule.nus()) nus.push_back(matrix_to_json(nu));
  for (const auto& u : schedule.ubars()) ubars.push_back(matrix_to_json(u));
  return json{{"m", schedule.input_dim()},
              {"horizon", schedule.horizon()},
              {"seed", schedule.seed()},
              {"nus", std::move(nus)},
              {"Ubars", std::move(ubars)}};
}

inline InputSchedule schedule_from_json(const json& j) {
  const Index m = detail::require(j, "m", "InputSchedule").get<Index>();
  const Index l = detail::require(j, "horizon", "InputSchedule").get<Index>();
  const auto seed = detail::require(j, "seed", "InputSchedule").get<std::uint64_t>();
  const json& nus_j = detail::require(j, "nus", "InputSchedule");
  const json& ubars_j = detail::require(j, "Ubars", "InputSchedule");
  if (static_cast<Index>(nus_j.size()) != l || static_cast<Index>(ubars_j.size()) != l)
    throw ConfigError("InputSchedule: sequence lengths must equal horizon");
  std::vector<VectorXd> nus;
  std::vector<MatrixXd> ubars;
  for (Index t = 0; t < l; ++t) {
    nus.push_back(matrix_from_json(nus_j[t], m, 1, "nus"));
    ubars.push_back(matrix_from_json(ubars_j[t], m, m, "Ubars"));
  }
  return InputSchedule(m, std::move(nus), std::move(ubars), seed);
}

inline json to_json(const RankCertificate& cert) {
  return json{{"matrix", cert.matrix_name},
              {"required_rank", cert.required_rank},
              {"computed_rank", cert.computed_rank},
              {"min_singular_value", cert.min_singular_value},
              {"full_rank", cert.full_rank}};
}

inline json to_json(const EstimationResult& result) {
  json j{{"n", result.Ahat.rows()},
         {"m", result.Bhat.cols()},
         {"Ahat", matrix_to_json(result.Ahat)},
         {"Bhat", matrix_to_json(result.Bhat)},
         {"tildeSigmaAhat", matrix_to_json(result.tildeSigmaAhat)},
         {"tildeSigmaBhat", matrix_to_json(result.tildeSigmaBhat)},
         {"certZ", to_json(result.certZ)},
         {"certD", to_json(result.certD)},
         {"seed", result.seed},
         {"n_r", result.n_r},
         {"horizon", result.horizon}};
  j["metrics"] = json(result.metrics);
  j["flags"] = json(result.flags);
  return j;
}

/// Parses a JSON document, converting byte offsets in parse errors to
/// line numbers for diagnostics.
inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < e.byte && i < text.size(); ++i)
      if (text[i] == '\n') ++line;
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + e.what());
  }
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path);
}

}  // namespace mals
