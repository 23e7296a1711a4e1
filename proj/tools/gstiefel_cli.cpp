// Command-line experiment runner: solve (run a configured experiment),
// check (self-verification suites), synth (write a planted synthetic CCA
// dataset), report (render tables and plot data from a run directory).
//
// Exit codes: 0 success, 1 verification failure, 2 config/usage error,
// 3 numerical abort, 4 IO error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "gstiefel/check.hpp"
#include "gstiefel/runner.hpp"

namespace {

using namespace gstiefel;

constexpr int kExitOk = 0;
constexpr int kExitFailedCheck = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_solve(const std::string& config_path, std::optional<std::uint64_t> seed_override,
              const std::string& out_override, Index jobs, bool verbose) {
  RunConfig config = parse_config(read_file(config_path));
  if (seed_override) config.solver.seeds = {*seed_override};
  if (!out_override.empty()) config.output.directory = out_override;
  validate_config(config);

  run::SolveReport report = run::solve(config, jobs);
  bool aborted = false;
  for (const run::JobOutcome& outcome : report.outcomes) {
    if (outcome.status != RunStatus::kOk) {
      aborted = true;
      std::cerr << "job cell=" << outcome.spec.cell.index << " seed=" << outcome.spec.seed
                << " aborted: " << outcome.message << '\n';
    }
  }
  const run::CellSummary& best =
      report.summaries[static_cast<size_t>(report.selected_cell)];
  std::cout << "solver " << report.solver_name << ": " << report.cells.size()
            << " grid cell(s) x " << config.solver.seeds.size() << " seed(s)\n";
  std::cout << "selected cell " << best.cell.index;
  if (report.solver_name != "det-gd")
    std::cout << " (s1=" << best.cell.s1 << ", s2=" << best.cell.s2 << ")";
  std::cout << ": fval_mean=" << run::markdown_cell(best.fval.mean)
            << " feas_mean=" << run::markdown_cell(best.feas_raw.mean)
            << " pcc_post_median=" << run::markdown_cell(best.pcc_post.median) << '\n';
  if (verbose)
    for (const std::string& file : report.files) std::cout << "  wrote " << file << '\n';
  std::cout << "outputs in " << config.output.directory << '\n';
  return aborted ? kExitNumerical : kExitOk;
}

int cmd_check(const std::vector<std::string>& suites, std::uint64_t seed, bool mutate) {
  check::CheckOptions options;
  options.seed = seed;
  options.mutate_penalty_sign = mutate;
  std::vector<check::SuiteResult> results = check::run_suites(suites, options);
  bool all_passed = true;
  for (const check::SuiteResult& r : results) {
    std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name
              << "  max_residual=" << r.max_residual << "  threshold=" << r.threshold
              << "  (" << r.detail << ")\n";
    all_passed = all_passed && r.passed;
  }
  std::cout << (all_passed ? "all suites passed" : "some suites FAILED") << '\n';
  return all_passed ? kExitOk : kExitFailedCheck;
}

int cmd_synth(Index n1, Index n2, Index p, const std::vector<double>& rho, Index samples,
              std::uint64_t seed, const std::string& out_dir) {
  SyntheticCcaSpec spec;
  spec.n1 = n1;
  spec.n2 = n2;
  spec.p = p;
  spec.rho = Eigen::Map<const Vector>(rho.data(), static_cast<Index>(rho.size()));
  spec.num_samples = samples;
  std::vector<std::string> files = run::write_synthetic_dataset(spec, seed, out_dir);
  for (const std::string& f : files) std::cout << "wrote " << out_dir << "/" << f << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic optimization over expectation-formulated generalized "
               "Stiefel manifolds (constraint-dissolving penalty solvers)"};
  app.require_subcommand(1);

  // solve
  auto* solve = app.add_subcommand("solve", "run a configured experiment");
  std::string config_path;
  std::string out_override;
  std::optional<std::uint64_t> seed_override;
  Index jobs = 1;
  bool verbose = false;
  solve->add_option("--config", config_path, "YAML run configuration")->required();
  solve->add_option("--seed", seed_override, "override the seed list with one seed");
  solve->add_option("--out", out_override, "override the output directory");
  solve->add_option("--jobs", jobs, "worker threads for independent jobs");
  solve->add_flag("--verbose", verbose, "list every written file");

  // check
  auto* check_cmd = app.add_subcommand("check", "run the self-verification suites");
  std::vector<std::string> suites;
  std::uint64_t check_seed = 20240915;
  bool mutate = false;
  check_cmd->add_option("--suite", suites,
                        "run only the named suite(s); repeatable. Known: fd-grad, fd-hess, "
                        "manifold-identity, commuting-q, unbiasedness, saddle, tracker");
  check_cmd->add_option("--seed", check_seed, "instance seed");
  check_cmd->add_flag("--mutate-penalty-sign", mutate,
                      "inject a sign error into the penalty gradient (the FD suite must "
                      "then fail; sensitivity check)");

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic planted-correlation dataset");
  Index n1 = 25, n2 = 25, p = 5, samples = 20000;
  std::uint64_t synth_seed = 7;
  std::vector<double> rho;
  std::string synth_out = "synth";
  synth->add_option("--n1", n1, "features of view 1");
  synth->add_option("--n2", n2, "features of view 2");
  synth->add_option("--p", p, "number of canonical pairs");
  synth->add_option("--rho", rho, "planted correlations (one per pair)")->required();
  synth->add_option("--samples", samples, "sample count");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory");

  // report
  auto* report = app.add_subcommand("report", "render report.md and plot data");
  std::string report_dir;
  report->add_option("dir", report_dir, "run directory with metrics/summary CSVs")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (solve->parsed())
      return cmd_solve(config_path, seed_override, out_override, jobs, verbose);
    if (check_cmd->parsed()) return cmd_check(suites, check_seed, mutate);
    if (synth->parsed()) {
      if (samples < 1) throw ConfigError("synth: --samples must be >= 1");
      return cmd_synth(n1, n2, p, rho, samples, synth_seed, synth_out);
    }
    if (report->parsed()) {
      run::write_report(report_dir);
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const DataFormatError& e) {
    std::cerr << "data format error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}
