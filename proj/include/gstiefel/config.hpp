// Run configuration: a YAML document with problem / solver / output
// sections. Parsing validates every field up front and rejects unknown keys
// by name; serialize -> parse is the identity on the parsed structure.
#pragma once

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gstiefel/dense.hpp"

namespace gstiefel {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProblemConfig {
  enum class Kind { kQuadratic, kGcca, kSyntheticCca };
  Kind kind = Kind::kSyntheticCca;

  // quadratic: a seeded random SPD pencil (A, M) with objective tr(X^T A X).
  Index n = 50;
  std::uint64_t instance_seed = 1;

  // gcca: user-supplied data, one file per view or one file plus block_dims.
  std::vector<std::string> data;
  std::vector<Index> block_dims;
  std::string merit = "identity";  // identity | huber
  double mu = 1.0;
  double pair_weight = 0.5;
  bool center = true;
  bool scale = false;
  std::string truth_xbar;  // optional GSMX with a reference solution for PCC

  // synthetic-cca: planted correlations.
  Index n1 = 25;
  Index n2 = 25;
  std::vector<double> rho;
  Index samples = 20000;
  std::uint64_t data_seed = 7;

  Index p = 5;  // shared

  bool operator==(const ProblemConfig&) const = default;
};

struct SolverConfig {
  enum class Kind { kCdfsg, kCdfsgAda, kDetGd };
  Kind kind = Kind::kCdfsg;

  std::vector<double> s1 = {0.5};
  std::vector<double> s2 = {0.1};
  std::string schedule = "constant";  // constant | theory
  Index iterations = 0;               // 0 -> one pass over the data
  Index epochs = 1;
  std::optional<double> beta;  // empty -> 0.1 for (G)CCA, max(1, beta_tilde) for quadratic
  double eta1 = 0.9;
  double eta2 = 0.999;
  double eps = 1e-8;
  Index batch_size = 100;
  std::vector<std::uint64_t> seeds = {1};
  double step = 0.01;  // det-gd

  bool operator==(const SolverConfig&) const = default;
};

struct OutputConfig {
  std::string directory = "out";
  Index metric_cadence = 0;  // 0 -> ceil(K/100)
  bool emit_plot_data = true;

  bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
  ProblemConfig problem;
  SolverConfig solver;
  OutputConfig output;

  bool operator==(const RunConfig&) const = default;
};

namespace detail_config {

inline void check_keys(const YAML::Node& node, const std::string& section,
                       const std::set<std::string>& allowed) {
  if (!node.IsMap()) throw ConfigError("section '" + section + "' must be a mapping");
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (!allowed.count(key))
      throw ConfigError("unknown key '" + section + "." + key + "'");
  }
}

template <class T>
T get(const YAML::Node& node, const std::string& section, const std::string& key, T fallback) {
  const YAML::Node v = node[key];
  if (!v) return fallback;
  try {
    return v.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("invalid value for '" + section + "." + key + "'");
  }
}

template <class T>
std::vector<T> get_list(const YAML::Node& node, const std::string& section,
                        const std::string& key, std::vector<T> fallback) {
  const YAML::Node v = node[key];
  if (!v) return fallback;
  try {
    if (v.IsScalar()) return {v.as<T>()};
    return v.as<std::vector<T>>();
  } catch (const YAML::Exception&) {
    throw ConfigError("invalid list for '" + section + "." + key + "'");
  }
}

}  // namespace detail_config

inline ProblemConfig::Kind problem_kind_from_string(const std::string& s) {
  if (s == "quadratic") return ProblemConfig::Kind::kQuadratic;
  if (s == "gcca") return ProblemConfig::Kind::kGcca;
  if (s == "synthetic-cca") return ProblemConfig::Kind::kSyntheticCca;
  throw ConfigError("problem.kind must be quadratic | gcca | synthetic-cca, got '" + s + "'");
}

inline std::string to_string(ProblemConfig::Kind kind) {
  switch (kind) {
    case ProblemConfig::Kind::kQuadratic: return "quadratic";
    case ProblemConfig::Kind::kGcca: return "gcca";
    case ProblemConfig::Kind::kSyntheticCca: return "synthetic-cca";
  }
  return "?";
}

inline SolverConfig::Kind solver_kind_from_string(const std::string& s) {
  if (s == "cdfsg") return SolverConfig::Kind::kCdfsg;
  if (s == "cdfsg-ada") return SolverConfig::Kind::kCdfsgAda;
  if (s == "det-gd") return SolverConfig::Kind::kDetGd;
  throw ConfigError("solver.kind must be cdfsg | cdfsg-ada | det-gd, got '" + s + "'");
}

inline std::string to_string(SolverConfig::Kind kind) {
  switch (kind) {
    case SolverConfig::Kind::kCdfsg: return "cdfsg";
    case SolverConfig::Kind::kCdfsgAda: return "cdfsg-ada";
    case SolverConfig::Kind::kDetGd: return "det-gd";
  }
  return "?";
}

inline void validate_config(const RunConfig& config) {
  const ProblemConfig& prob = config.problem;
  if (prob.p < 1) throw ConfigError("problem.p must be >= 1");
  switch (prob.kind) {
    case ProblemConfig::Kind::kQuadratic:
      if (prob.n < prob.p) throw ConfigError("problem.n must be >= problem.p");
      break;
    case ProblemConfig::Kind::kGcca:
      if (prob.data.empty()) throw ConfigError("problem.data is required for gcca");
      if (prob.data.size() == 1 && prob.block_dims.size() < 2)
        throw ConfigError("problem.block_dims must list >= 2 blocks for a single data file");
      if (prob.merit != "identity" && prob.merit != "huber")
        throw ConfigError("problem.merit must be identity | huber");
      if (prob.merit == "huber" && !(prob.mu > 0))
        throw ConfigError("problem.mu must be positive for the huber merit");
      if (!(prob.pair_weight > 0)) throw ConfigError("problem.pair_weight must be positive");
      break;
    case ProblemConfig::Kind::kSyntheticCca:
      if (prob.rho.empty()) throw ConfigError("problem.rho is required for synthetic-cca");
      if (static_cast<Index>(prob.rho.size()) != prob.p)
        throw ConfigError("problem.rho must list exactly problem.p values");
      for (double r : prob.rho)
        if (!(r >= 0.0 && r < 1.0)) throw ConfigError("problem.rho entries must lie in [0, 1)");
      if (prob.samples < 1) throw ConfigError("problem.samples must be >= 1");
      if (prob.n1 < prob.p || prob.n2 < prob.p)
        throw ConfigError("problem.n1 and problem.n2 must be >= problem.p");
      break;
  }

  const SolverConfig& solver = config.solver;
  if (solver.schedule != "constant" && solver.schedule != "theory")
    throw ConfigError("solver.schedule must be constant | theory");
  if (solver.seeds.empty()) throw ConfigError("solver.seeds must not be empty");
  if (solver.kind == SolverConfig::Kind::kDetGd) {
    if (!(solver.step > 0)) throw ConfigError("solver.step must be positive");
    if (solver.iterations < 1)
      throw ConfigError("solver.iterations must be >= 1 for det-gd");
  } else {
    if (solver.s1.empty() || solver.s2.empty())
      throw ConfigError("solver.s1 and solver.s2 must not be empty");
    for (double v : solver.s1)
      if (!(v > 0 && v <= 2)) throw ConfigError("solver.s1 values must lie in (0, 2]");
    for (double v : solver.s2)
      if (!(v > 0)) throw ConfigError("solver.s2 values must be positive");
    if (!(solver.eta1 >= 0 && solver.eta1 < 1 && solver.eta1 * solver.eta1 < solver.eta2 &&
          solver.eta2 < 1))
      throw ConfigError("solver.eta1/eta2 must satisfy eta1^2 < eta2 < 1");
    if (!(solver.eps > 0)) throw ConfigError("solver.eps must be positive");
    if (solver.batch_size < 1) throw ConfigError("solver.batch_size must be >= 1");
  }
  if (solver.beta && !(*solver.beta > 0)) throw ConfigError("solver.beta must be positive");
  if (solver.iterations < 0) throw ConfigError("solver.iterations must be >= 0");
  if (solver.epochs < 1) throw ConfigError("solver.epochs must be >= 1");
  if (config.problem.kind == ProblemConfig::Kind::kQuadratic &&
      solver.kind != SolverConfig::Kind::kDetGd && solver.iterations < 1)
    throw ConfigError("solver.iterations must be >= 1 for quadratic problems");

  if (config.output.directory.empty()) throw ConfigError("output.directory must be set");
  if (config.output.metric_cadence < 0)
    throw ConfigError("output.metric_cadence must be >= 0");
}

inline RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  if (!root.IsMap()) throw ConfigError("config must be a YAML mapping");
  detail_config::check_keys(root, "", {"problem", "solver", "output"});
  if (!root["problem"] || !root["solver"] || !root["output"])
    throw ConfigError("config needs problem, solver, and output sections");

  using detail_config::get;
  using detail_config::get_list;

  RunConfig config;
  const YAML::Node prob = root["problem"];
  detail_config::check_keys(
      prob, "problem",
      {"kind", "n", "p", "instance_seed", "data", "block_dims", "merit", "mu", "pair_weight",
       "center", "scale", "truth_xbar", "n1", "n2", "rho", "samples", "data_seed"});
  config.problem.kind =
      problem_kind_from_string(get<std::string>(prob, "problem", "kind", "synthetic-cca"));
  config.problem.n = get<Index>(prob, "problem", "n", config.problem.n);
  config.problem.p = get<Index>(prob, "problem", "p", config.problem.p);
  config.problem.instance_seed =
      get<std::uint64_t>(prob, "problem", "instance_seed", config.problem.instance_seed);
  config.problem.data = get_list<std::string>(prob, "problem", "data", {});
  config.problem.block_dims = get_list<Index>(prob, "problem", "block_dims", {});
  config.problem.merit = get<std::string>(prob, "problem", "merit", config.problem.merit);
  config.problem.mu = get<double>(prob, "problem", "mu", config.problem.mu);
  config.problem.pair_weight =
      get<double>(prob, "problem", "pair_weight", config.problem.pair_weight);
  config.problem.center = get<bool>(prob, "problem", "center", config.problem.center);
  config.problem.scale = get<bool>(prob, "problem", "scale", config.problem.scale);
  config.problem.truth_xbar =
      get<std::string>(prob, "problem", "truth_xbar", config.problem.truth_xbar);
  config.problem.n1 = get<Index>(prob, "problem", "n1", config.problem.n1);
  config.problem.n2 = get<Index>(prob, "problem", "n2", config.problem.n2);
  config.problem.rho = get_list<double>(prob, "problem", "rho", {});
  config.problem.samples = get<Index>(prob, "problem", "samples", config.problem.samples);
  config.problem.data_seed =
      get<std::uint64_t>(prob, "problem", "data_seed", config.problem.data_seed);

  const YAML::Node solver = root["solver"];
  detail_config::check_keys(solver, "solver",
                            {"kind", "s1", "s2", "schedule", "iterations", "epochs", "beta",
                             "eta1", "eta2", "eps", "batch_size", "seeds", "step"});
  config.solver.kind =
      solver_kind_from_string(get<std::string>(solver, "solver", "kind", "cdfsg"));
  config.solver.s1 = get_list<double>(solver, "solver", "s1", config.solver.s1);
  config.solver.s2 = get_list<double>(solver, "solver", "s2", config.solver.s2);
  config.solver.schedule =
      get<std::string>(solver, "solver", "schedule", config.solver.schedule);
  config.solver.iterations = get<Index>(solver, "solver", "iterations", config.solver.iterations);
  config.solver.epochs = get<Index>(solver, "solver", "epochs", config.solver.epochs);
  if (solver["beta"]) config.solver.beta = get<double>(solver, "solver", "beta", 0.0);
  config.solver.eta1 = get<double>(solver, "solver", "eta1", config.solver.eta1);
  config.solver.eta2 = get<double>(solver, "solver", "eta2", config.solver.eta2);
  config.solver.eps = get<double>(solver, "solver", "eps", config.solver.eps);
  config.solver.batch_size = get<Index>(solver, "solver", "batch_size", config.solver.batch_size);
  config.solver.seeds = get_list<std::uint64_t>(solver, "solver", "seeds", config.solver.seeds);
  config.solver.step = get<double>(solver, "solver", "step", config.solver.step);

  const YAML::Node output = root["output"];
  detail_config::check_keys(output, "output",
                            {"directory", "metric_cadence", "emit_plot_data"});
  config.output.directory =
      get<std::string>(output, "output", "directory", config.output.directory);
  config.output.metric_cadence =
      get<Index>(output, "output", "metric_cadence", config.output.metric_cadence);
  config.output.emit_plot_data =
      get<bool>(output, "output", "emit_plot_data", config.output.emit_plot_data);

  validate_config(config);
  return config;
}

inline std::string serialize_config(const RunConfig& config) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "problem" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << to_string(config.problem.kind);
  out << YAML::Key << "p" << YAML::Value << static_cast<long long>(config.problem.p);
  out << YAML::Key << "n" << YAML::Value << static_cast<long long>(config.problem.n);
  out << YAML::Key << "instance_seed" << YAML::Value << config.problem.instance_seed;
  if (!config.problem.data.empty())
    out << YAML::Key << "data" << YAML::Value << YAML::Flow << config.problem.data;
  if (!config.problem.block_dims.empty()) {
    out << YAML::Key << "block_dims" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (Index d : config.problem.block_dims) out << static_cast<long long>(d);
    out << YAML::EndSeq;
  }
  out << YAML::Key << "merit" << YAML::Value << config.problem.merit;
  out << YAML::Key << "mu" << YAML::Value << config.problem.mu;
  out << YAML::Key << "pair_weight" << YAML::Value << config.problem.pair_weight;
  out << YAML::Key << "center" << YAML::Value << config.problem.center;
  out << YAML::Key << "scale" << YAML::Value << config.problem.scale;
  if (!config.problem.truth_xbar.empty())
    out << YAML::Key << "truth_xbar" << YAML::Value << config.problem.truth_xbar;
  out << YAML::Key << "n1" << YAML::Value << static_cast<long long>(config.problem.n1);
  out << YAML::Key << "n2" << YAML::Value << static_cast<long long>(config.problem.n2);
  if (!config.problem.rho.empty())
    out << YAML::Key << "rho" << YAML::Value << YAML::Flow << config.problem.rho;
  out << YAML::Key << "samples" << YAML::Value
      << static_cast<long long>(config.problem.samples);
  out << YAML::Key << "data_seed" << YAML::Value << config.problem.data_seed;
  out << YAML::EndMap;

  out << YAML::Key << "solver" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << to_string(config.solver.kind);
  out << YAML::Key << "s1" << YAML::Value << YAML::Flow << config.solver.s1;
  out << YAML::Key << "s2" << YAML::Value << YAML::Flow << config.solver.s2;
  out << YAML::Key << "schedule" << YAML::Value << config.solver.schedule;
  out << YAML::Key << "iterations" << YAML::Value
      << static_cast<long long>(config.solver.iterations);
  out << YAML::Key << "epochs" << YAML::Value << static_cast<long long>(config.solver.epochs);
  if (config.solver.beta) out << YAML::Key << "beta" << YAML::Value << *config.solver.beta;
  out << YAML::Key << "eta1" << YAML::Value << config.solver.eta1;
  out << YAML::Key << "eta2" << YAML::Value << config.solver.eta2;
  out << YAML::Key << "eps" << YAML::Value << config.solver.eps;
  out << YAML::Key << "batch_size" << YAML::Value
      << static_cast<long long>(config.solver.batch_size);
  out << YAML::Key << "seeds" << YAML::Value << YAML::Flow << config.solver.seeds;
  out << YAML::Key << "step" << YAML::Value << config.solver.step;
  out << YAML::EndMap;

  out << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "directory" << YAML::Value << config.output.directory;
  out << YAML::Key << "metric_cadence" << YAML::Value
      << static_cast<long long>(config.output.metric_cadence);
  out << YAML::Key << "emit_plot_data" << YAML::Value << config.output.emit_plot_data;
  out << YAML::EndMap << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace gstiefel
