// Experiment orchestration behind the CLI: builds problems from a
// RunConfig, runs every (grid cell, seed) job, writes per-run metrics CSVs,
// a per-cell summary CSV, and final/post-processed iterates, and renders
// the report tables and plot data.
#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "gstiefel/check.hpp"
#include "gstiefel/config.hpp"
#include "gstiefel/data_io.hpp"
#include "gstiefel/gcca.hpp"
#include "gstiefel/optimizer.hpp"

namespace gstiefel::run {

namespace fs = std::filesystem;

inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_cell_value(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::stod(s);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  size_t start = 0;
  while (true) {
    size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  if (!cells.empty() && !cells.back().empty() && cells.back().back() == '\r')
    cells.back().pop_back();
  return cells;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  Index column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<Index>(i);
    throw IoError("csv column '" + name + "' not found");
  }
};

inline CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (table.header.empty())
      table.header = cells;
    else
      table.rows.push_back(cells);
  }
  if (table.header.empty()) throw IoError("empty csv '" + path + "'");
  return table;
}

// ---------------------------------------------------------------------------
// Problem construction.
// ---------------------------------------------------------------------------

struct BuiltProblem {
  ProblemConfig::Kind kind = ProblemConfig::Kind::kQuadratic;
  Index n = 0;
  Index p = 0;
  ExactPair exact;
  double default_beta = 0.1;
  double pencil_eigsum = std::numeric_limits<double>::quiet_NaN();  // quadratic oracle

  // Empirical kinds only:
  std::shared_ptr<const EmpiricalData> data;
  GccaProblem gcca;
  std::optional<GroundTruth> truth;  // enables PCC
  Matrix cov11, cov22, cov12;        // two-view empirical covariances
  double reference_tcc = std::numeric_limits<double>::quiet_NaN();

  StochasticProblem make_stochastic(Index batch_size) const {
    if (kind == ProblemConfig::Kind::kQuadratic)
      return deterministic_problem(exact.objective, exact.constraint, n, p);
    EmpiricalOptions options;
    options.batch_size = std::min<Index>(batch_size, data->num_samples);
    return gcca_problem_to_stochastic(gcca, data, options);
  }

  // PCC through the precomputed covariance blocks: algebraically identical
  // to pcc() on the raw data (the sample count cancels in the whitening) but
  // O(n^2 p) per evaluation instead of O(N n p), with the reference TCC
  // cached once.
  std::function<double(const Matrix&)> pcc_metric() const {
    if (!truth || std::isnan(reference_tcc)) return nullptr;
    Matrix c11 = cov11, c22 = cov22, c12 = cov12;
    const double ref = reference_tcc;
    return [c11, c22, c12, ref](const Matrix& x) {
      return tcc_population(x, c11, c22, c12) / ref;
    };
  }

  Index one_pass_iterations(Index batch_size) const {
    if (!data) return 0;
    const Index l = std::min<Index>(batch_size, data->num_samples);
    return (data->num_samples + l - 1) / l;
  }
};

/// Random SPD quadratic instance: pencil matrix A with spectrum in
/// [0.05, 1], M with spectrum in [1, 1.3], objective tr(X^T A X) (so the
/// optimum equals the sum of the p smallest generalized eigenvalues of
/// (A, M)), and beta defaulting to max(1, beta_tilde).
inline BuiltProblem build_quadratic(const ProblemConfig& config) {
  Rng rng(config.instance_seed);
  BuiltProblem built;
  built.kind = ProblemConfig::Kind::kQuadratic;
  built.n = config.n;
  built.p = config.p;
  const Matrix a = check::random_spd(config.n, rng, 0.05, 1.0);
  const Matrix m = check::random_spd(config.n, rng, 1.0, 1.3);
  built.exact.objective = quadratic_objective(2.0 * a);
  built.exact.constraint = constraint_from_matrix(m);
  const double l_g = 2.0 * sym_eig(symmetrize(a)).values.cwiseAbs().maxCoeff();
  built.default_beta =
      std::max(1.0, beta_threshold(config.p, l_g, 0.0, built.exact.constraint.sigma_min,
                                   built.exact.constraint.sigma_max));
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> pencil(symmetrize(a).mat(), m);
  built.pencil_eigsum = pencil.eigenvalues().head(config.p).sum();
  return built;
}

inline BuiltProblem build_synthetic_cca(const ProblemConfig& config) {
  SyntheticCcaSpec spec;
  spec.n1 = config.n1;
  spec.n2 = config.n2;
  spec.p = config.p;
  spec.rho = Eigen::Map<const Vector>(config.rho.data(), static_cast<Index>(config.rho.size()));
  spec.num_samples = config.samples;
  SyntheticCca synth = make_synthetic_cca(spec, config.data_seed);

  BuiltProblem built;
  built.kind = ProblemConfig::Kind::kSyntheticCca;
  built.n = config.n1 + config.n2;
  built.p = config.p;
  std::vector<Matrix> centered;
  for (const Matrix& block : synth.blocks)
    centered.push_back(standardize(block, config.center, config.scale));
  built.data = make_empirical_data(std::move(centered));
  built.gcca = synth.problem;
  built.exact.objective = exact_gcca_objective(built.data, built.gcca);
  built.exact.constraint = exact_constraint_from_data(built.data);
  built.default_beta = 0.1;

  // Reference solution from the full-sample covariances (the PCC oracle).
  const double n_samples = static_cast<double>(built.data->num_samples);
  const Matrix& z1 = built.data->blocks[0];
  const Matrix& z2 = built.data->blocks[1];
  built.cov11 = z1.transpose() * z1 / n_samples;
  built.cov22 = z2.transpose() * z2 / n_samples;
  built.cov12 = z1.transpose() * z2 / n_samples;
  built.truth = cca_ground_truth(built.cov11, built.cov22, built.cov12, config.p);
  built.reference_tcc =
      tcc_population(built.truth->xbar, built.cov11, built.cov22, built.cov12);
  return built;
}

inline Matrix load_matrix_any(const std::string& path) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".gsmx") return load_bin(path);
  return load_csv(path);
}

inline BuiltProblem build_gcca(const ProblemConfig& config) {
  std::vector<Matrix> blocks;
  if (config.data.size() == 1) {
    Matrix whole = load_matrix_any(config.data[0]);
    BlockSpec spec{config.block_dims};
    for (const auto view : split_blocks(whole, spec)) blocks.emplace_back(view);
  } else {
    for (const std::string& path : config.data) blocks.push_back(load_matrix_any(path));
    if (!config.block_dims.empty()) {
      if (config.block_dims.size() != blocks.size())
        throw ConfigError("problem.block_dims disagrees with the number of data files");
      for (size_t i = 0; i < blocks.size(); ++i)
        if (blocks[i].cols() != config.block_dims[i])
          throw ConfigError("problem.block_dims disagrees with data file widths");
    }
  }
  std::vector<Index> constant_cols;
  for (Matrix& block : blocks) {
    block = standardize(block, config.center, config.scale, &constant_cols);
  }
  if (!constant_cols.empty())
    std::cerr << "warning: " << constant_cols.size()
              << " near-constant column(s) left unscaled\n";

  BuiltProblem built;
  built.kind = ProblemConfig::Kind::kGcca;
  built.p = config.p;
  built.gcca.blocks.block_dims.clear();
  for (const Matrix& block : blocks) built.gcca.blocks.block_dims.push_back(block.cols());
  built.n = built.gcca.blocks.total();
  built.gcca.weights = uniform_weights(static_cast<Index>(blocks.size()), config.pair_weight);
  built.gcca.merit = Merit{config.merit == "huber" ? Merit::Kind::kHuber
                                                   : Merit::Kind::kIdentity,
                           config.mu};
  built.gcca.p = config.p;
  built.gcca.validate();
  built.data = make_empirical_data(std::move(blocks));
  built.exact.objective = exact_gcca_objective(built.data, built.gcca);
  built.exact.constraint = exact_constraint_from_data(built.data);
  built.default_beta = 0.1;

  if (!config.truth_xbar.empty()) {
    if (built.data->blocks.size() != 2)
      throw ConfigError("problem.truth_xbar needs a two-view problem");
    GroundTruth truth;
    truth.xbar = load_bin(config.truth_xbar);
    if (truth.xbar.rows() != built.n || truth.xbar.cols() != config.p)
      throw ConfigError("problem.truth_xbar has the wrong shape");
    const double n_samples = static_cast<double>(built.data->num_samples);
    const Matrix& z1 = built.data->blocks[0];
    const Matrix& z2 = built.data->blocks[1];
    built.cov11 = z1.transpose() * z1 / n_samples;
    built.cov22 = z2.transpose() * z2 / n_samples;
    built.cov12 = z1.transpose() * z2 / n_samples;
    built.reference_tcc =
        tcc_population(truth.xbar, built.cov11, built.cov22, built.cov12);
    built.truth = std::move(truth);
  }
  return built;
}

inline BuiltProblem build_problem(const ProblemConfig& config) {
  switch (config.kind) {
    case ProblemConfig::Kind::kQuadratic: return build_quadratic(config);
    case ProblemConfig::Kind::kSyntheticCca: return build_synthetic_cca(config);
    case ProblemConfig::Kind::kGcca: return build_gcca(config);
  }
  throw ConfigError("unreachable problem kind");
}

/// Per-seed initial point: a column-orthonormal frame from a seeded
/// Gaussian, identical across solvers and grid cells for the same seed.
inline Matrix orthonormal_init(Index n, Index p, std::uint64_t seed) {
  Rng rng(seed * 0x9E3779B97F4A7C15ULL + 0xA11CEULL);
  Matrix g = check::random_matrix(n, p, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = Matrix(qr.householderQ()).leftCols(p);
  Matrix r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  for (Index j = 0; j < p; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q;
}

// ---------------------------------------------------------------------------
// Jobs.
// ---------------------------------------------------------------------------

struct GridCell {
  Index index = 0;
  double s1 = 0.0;
  double s2 = 0.0;
};

struct JobSpec {
  GridCell cell;
  std::uint64_t seed = 0;
};

struct JobOutcome {
  JobSpec spec;
  RunStatus status = RunStatus::kOk;
  std::string message;
  double fval = std::numeric_limits<double>::quiet_NaN();
  double feas_raw = std::numeric_limits<double>::quiet_NaN();
  double feas_post = std::numeric_limits<double>::quiet_NaN();
  double pcc_raw = std::numeric_limits<double>::quiet_NaN();
  double pcc_post = std::numeric_limits<double>::quiet_NaN();
  double wall_s = 0.0;
  bool post_ok = false;
  RunRecord record;
  Matrix x_final;
  Matrix x_post;
  SymMatrix y_final;
};

inline Index resolve_iterations(const BuiltProblem& built, const SolverConfig& solver) {
  if (solver.kind == SolverConfig::Kind::kDetGd) return solver.iterations;
  if (built.kind == ProblemConfig::Kind::kQuadratic) return solver.iterations;
  if (solver.iterations > 0) return solver.iterations;
  return solver.epochs * built.one_pass_iterations(solver.batch_size);
}

inline double resolve_beta(const BuiltProblem& built, const SolverConfig& solver) {
  return solver.beta ? *solver.beta : built.default_beta;
}

inline JobOutcome run_job(const BuiltProblem& built, const SolverConfig& solver,
                          const OutputConfig& output, const JobSpec& spec) {
  JobOutcome outcome;
  outcome.spec = spec;
  const Index iterations = resolve_iterations(built, solver);
  const PenaltyParams params(resolve_beta(built, solver));
  const Matrix x0 = orthonormal_init(built.n, built.p, spec.seed);

  RunHooks hooks;
  hooks.exact_metric_cadence = output.metric_cadence;
  hooks.pcc_metric = built.pcc_metric();

  RunResult result;
  switch (solver.kind) {
    case SolverConfig::Kind::kCdfsg: {
      StochasticProblem problem = built.make_stochastic(solver.batch_size);
      StepSchedule sched(spec.cell.s1, spec.cell.s2, iterations,
                         solver.schedule == "theory" ? StepSchedule::Mode::kTheory
                                                     : StepSchedule::Mode::kConstant);
      result = cdfsg_run(problem, x0, sched, params, spec.seed, hooks);
      break;
    }
    case SolverConfig::Kind::kCdfsgAda: {
      StochasticProblem problem = built.make_stochastic(solver.batch_size);
      StepSchedule sched(spec.cell.s1, spec.cell.s2, iterations,
                         solver.schedule == "theory" ? StepSchedule::Mode::kTheory
                                                     : StepSchedule::Mode::kConstant);
      AdaParams ada{solver.eta1, solver.eta2, solver.eps};
      result = cdfsg_ada_run(problem, x0, sched, params, ada, spec.seed, hooks);
      break;
    }
    case SolverConfig::Kind::kDetGd: {
      result = deterministic_gd_run(built.exact.objective, built.exact.constraint, x0,
                                    solver.step, iterations, params, hooks);
      break;
    }
  }

  outcome.status = result.status;
  outcome.message = result.message;
  outcome.record = std::move(result.record);
  outcome.wall_s = outcome.record.total_wall_s;
  outcome.x_final = result.x;
  outcome.y_final = result.y;
  if (result.status != RunStatus::kOk) return outcome;

  outcome.fval = built.exact.objective.value(result.x);
  outcome.feas_raw = feasibility_violation(gram(result.x, built.exact.constraint.apply));
  auto pcc_fn = built.pcc_metric();
  if (pcc_fn) outcome.pcc_raw = pcc_fn(result.x);
  try {
    outcome.x_post = postprocess(result.x, result.y);
    outcome.post_ok = true;
    outcome.feas_post =
        feasibility_violation(gram(outcome.x_post, built.exact.constraint.apply));
    if (pcc_fn) outcome.pcc_post = pcc_fn(outcome.x_post);
  } catch (const NotPositiveDefiniteError& e) {
    outcome.message = std::string("post-processing failed: ") + e.what();
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// Emission.
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = {"iter",  "wall_s", "fval", "feas_est",
                                                "dnorm", "grad_h", "kkt",  "pcc"};
  return cols;
}

inline std::string metrics_filename(const std::string& solver, Index cell,
                                    std::uint64_t seed) {
  return "metrics_" + solver + "_cell" + std::to_string(cell) + "_seed" +
         std::to_string(seed) + ".csv";
}

inline void write_metrics_csv(const std::string& path, const RunRecord& record) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "iter,wall_s,fval,feas_est,dnorm,grad_h,kkt,pcc\n";
  for (const RunMetricsRow& row : record.rows) {
    out << row.iter << ',' << format_double(row.wall_s) << ',' << format_double(row.fval)
        << ',' << format_double(row.feas_est) << ',' << format_double(row.dnorm) << ','
        << format_double(row.grad_h) << ',' << format_double(row.kkt) << ','
        << format_double(row.pcc) << '\n';
  }
}

struct Aggregate {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stddev = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  Index count = 0;
};

inline Aggregate aggregate(std::vector<double> values) {
  std::erase_if(values, [](double v) { return std::isnan(v); });
  Aggregate agg;
  agg.count = static_cast<Index>(values.size());
  if (values.empty()) return agg;
  const double n = static_cast<double>(values.size());
  agg.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
  agg.stddev = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  std::sort(values.begin(), values.end());
  const size_t mid = values.size() / 2;
  agg.median = values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  return agg;
}

struct CellSummary {
  GridCell cell;
  bool selected = false;
  Index n_seeds = 0;
  Index ok_count = 0;
  Index post_improved = 0;
  Aggregate fval, feas_raw, feas_post, pcc_raw, pcc_post;
  double time_mean_s = 0.0;
};

struct SolveReport {
  std::string solver_name;
  std::vector<GridCell> cells;
  std::vector<JobOutcome> outcomes;  // cells-major, seeds-minor order
  std::vector<CellSummary> summaries;
  Index selected_cell = 0;
  std::vector<std::string> files;
  double quadratic_eigsum = std::numeric_limits<double>::quiet_NaN();
};

inline std::vector<CellSummary> summarize_cells(const std::vector<GridCell>& cells,
                                                const std::vector<JobOutcome>& outcomes,
                                                size_t seeds_per_cell) {
  std::vector<CellSummary> summaries;
  for (size_t c = 0; c < cells.size(); ++c) {
    CellSummary summary;
    summary.cell = cells[c];
    std::vector<double> fval, feas_raw, feas_post, pcc_raw, pcc_post;
    double wall = 0.0;
    for (size_t s = 0; s < seeds_per_cell; ++s) {
      const JobOutcome& o = outcomes[c * seeds_per_cell + s];
      ++summary.n_seeds;
      if (o.status == RunStatus::kOk) ++summary.ok_count;
      fval.push_back(o.fval);
      feas_raw.push_back(o.feas_raw);
      feas_post.push_back(o.feas_post);
      pcc_raw.push_back(o.pcc_raw);
      pcc_post.push_back(o.pcc_post);
      wall += o.wall_s;
      if (o.post_ok && o.feas_post < o.feas_raw) ++summary.post_improved;
    }
    summary.fval = aggregate(fval);
    summary.feas_raw = aggregate(feas_raw);
    summary.feas_post = aggregate(feas_post);
    summary.pcc_raw = aggregate(pcc_raw);
    summary.pcc_post = aggregate(pcc_post);
    summary.time_mean_s = wall / static_cast<double>(seeds_per_cell);
    summaries.push_back(summary);
  }
  return summaries;
}

/// Best terminal objective estimate wins; ties prefer smaller s2, then
/// smaller s1. Cells with failed seeds lose to fully-successful cells.
inline Index select_cell(const std::vector<CellSummary>& summaries) {
  Index best = 0;
  auto better = [&](const CellSummary& a, const CellSummary& b) {
    if (a.ok_count != b.ok_count) return a.ok_count > b.ok_count;
    const double fa = std::isnan(a.fval.mean) ? std::numeric_limits<double>::infinity()
                                              : a.fval.mean;
    const double fb = std::isnan(b.fval.mean) ? std::numeric_limits<double>::infinity()
                                              : b.fval.mean;
    if (fa != fb) return fa < fb;
    if (a.cell.s2 != b.cell.s2) return a.cell.s2 < b.cell.s2;
    return a.cell.s1 < b.cell.s1;
  };
  for (Index c = 1; c < static_cast<Index>(summaries.size()); ++c)
    if (better(summaries[static_cast<size_t>(c)], summaries[static_cast<size_t>(best)]))
      best = c;
  return best;
}

inline void write_summary_csv(const std::string& path, const std::string& solver,
                              const SolverConfig& solver_config,
                              const std::vector<CellSummary>& summaries, Index selected) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "solver,cell,s1,s2,step,selected,n_seeds,ok_count,"
         "fval_mean,fval_std,fval_median,"
         "feas_raw_mean,feas_raw_std,feas_raw_median,"
         "feas_post_mean,feas_post_std,feas_post_median,"
         "pcc_raw_mean,pcc_raw_std,pcc_raw_median,"
         "pcc_post_mean,pcc_post_std,pcc_post_median,"
         "post_improved,time_mean_s\n";
  const bool det = solver == "det-gd";
  for (size_t c = 0; c < summaries.size(); ++c) {
    const CellSummary& s = summaries[c];
    out << solver << ',' << s.cell.index << ',';
    out << (det ? "" : format_double(s.cell.s1)) << ',';
    out << (det ? "" : format_double(s.cell.s2)) << ',';
    out << (det ? format_double(solver_config.step) : "") << ',';
    out << (static_cast<Index>(c) == selected ? 1 : 0) << ',' << s.n_seeds << ','
        << s.ok_count << ',';
    out << format_double(s.fval.mean) << ',' << format_double(s.fval.stddev) << ','
        << format_double(s.fval.median) << ',';
    out << format_double(s.feas_raw.mean) << ',' << format_double(s.feas_raw.stddev) << ','
        << format_double(s.feas_raw.median) << ',';
    out << format_double(s.feas_post.mean) << ',' << format_double(s.feas_post.stddev) << ','
        << format_double(s.feas_post.median) << ',';
    out << format_double(s.pcc_raw.mean) << ',' << format_double(s.pcc_raw.stddev) << ','
        << format_double(s.pcc_raw.median) << ',';
    out << format_double(s.pcc_post.mean) << ',' << format_double(s.pcc_post.stddev) << ','
        << format_double(s.pcc_post.median) << ',';
    out << s.post_improved << ',' << format_double(s.time_mean_s) << '\n';
  }
}

/// Runs every (cell, seed) job on up to `jobs` worker threads; outputs are
/// written after all jobs complete, in deterministic order.
inline SolveReport solve(const RunConfig& config, Index jobs = 1) {
  validate_config(config);
  BuiltProblem built = build_problem(config.problem);
  const SolverConfig& solver = config.solver;
  SolveReport report;
  report.solver_name = to_string(solver.kind);
  report.quadratic_eigsum = built.pencil_eigsum;

  if (solver.kind == SolverConfig::Kind::kDetGd) {
    report.cells.push_back(GridCell{0, 0.0, 0.0});
  } else {
    Index index = 0;
    for (double s1 : solver.s1)
      for (double s2 : solver.s2) report.cells.push_back(GridCell{index++, s1, s2});
  }

  std::vector<JobSpec> specs;
  for (const GridCell& cell : report.cells)
    for (std::uint64_t seed : solver.seeds) specs.push_back(JobSpec{cell, seed});
  report.outcomes.resize(specs.size());

  const Index worker_count = std::max<Index>(1, jobs);
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= specs.size()) break;
      report.outcomes[i] = run_job(built, solver, config.output, specs[i]);
    }
  };
  if (worker_count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (Index w = 0; w < worker_count; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  report.summaries = summarize_cells(report.cells, report.outcomes, solver.seeds.size());
  report.selected_cell = select_cell(report.summaries);
  for (auto& summary : report.summaries)
    summary.selected = summary.cell.index == report.selected_cell;

  const fs::path dir(config.output.directory);
  fs::create_directories(dir);
  for (size_t i = 0; i < specs.size(); ++i) {
    const std::string name =
        metrics_filename(report.solver_name, specs[i].cell.index, specs[i].seed);
    write_metrics_csv((dir / name).string(), report.outcomes[i].record);
    report.files.push_back(name);
  }
  const std::string summary_name = "summary_" + report.solver_name + ".csv";
  write_summary_csv((dir / summary_name).string(), report.solver_name, solver,
                    report.summaries, report.selected_cell);
  report.files.push_back(summary_name);

  const size_t seeds_n = solver.seeds.size();
  for (size_t s = 0; s < seeds_n; ++s) {
    const JobOutcome& o =
        report.outcomes[static_cast<size_t>(report.selected_cell) * seeds_n + s];
    if (o.status != RunStatus::kOk) continue;
    const std::string final_name = "x_final_" + report.solver_name + "_seed" +
                                   std::to_string(o.spec.seed) + ".gsmx";
    save_bin((dir / final_name).string(), o.x_final);
    report.files.push_back(final_name);
    if (o.post_ok) {
      const std::string post_name = "x_post_" + report.solver_name + "_seed" +
                                    std::to_string(o.spec.seed) + ".gsmx";
      save_bin((dir / post_name).string(), o.x_post);
      report.files.push_back(post_name);
    }
  }
  std::ofstream cfg_echo(dir / ("config_" + report.solver_name + ".yaml"));
  cfg_echo << serialize_config(config);
  return report;
}

// ---------------------------------------------------------------------------
// Synthetic dataset emission (`synth` subcommand).
// ---------------------------------------------------------------------------

inline std::vector<std::string> write_synthetic_dataset(const SyntheticCcaSpec& spec,
                                                        std::uint64_t seed,
                                                        const std::string& out_dir) {
  SyntheticCca synth = make_synthetic_cca(spec, seed);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  save_bin((dir / "block1.gsmx").string(), synth.blocks[0]);
  save_bin((dir / "block2.gsmx").string(), synth.blocks[1]);
  save_bin((dir / "truth_xbar.gsmx").string(), synth.population_truth.xbar);
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "rho" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (Index i = 0; i < synth.population_truth.canonical_correlations.size(); ++i)
    out << synth.population_truth.canonical_correlations(i);
  out << YAML::EndSeq;
  out << YAML::Key << "tcc" << YAML::Value << synth.population_truth.tcc_ref;
  out << YAML::Key << "xbar_file" << YAML::Value << "truth_xbar.gsmx";
  out << YAML::Key << "n1" << YAML::Value << static_cast<long long>(spec.n1);
  out << YAML::Key << "n2" << YAML::Value << static_cast<long long>(spec.n2);
  out << YAML::Key << "p" << YAML::Value << static_cast<long long>(spec.p);
  out << YAML::Key << "samples" << YAML::Value << static_cast<long long>(spec.num_samples);
  out << YAML::Key << "seed" << YAML::Value << seed;
  out << YAML::EndMap;
  std::ofstream sidecar(dir / "truth.yaml");
  if (!sidecar) throw IoError("cannot write truth.yaml");
  sidecar << out.c_str() << '\n';
  return {"block1.gsmx", "block2.gsmx", "truth_xbar.gsmx", "truth.yaml"};
}

// ---------------------------------------------------------------------------
// Report rendering (`report` subcommand).
// ---------------------------------------------------------------------------

inline std::string markdown_cell(double v) {
  if (std::isnan(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

/// Renders report.md (one row per solver, selected grid cell, mean over
/// seeds) and per-metric plot-data CSVs from the metric files in `run_dir`.
/// Returns the names of the written files.
inline std::vector<std::string> write_report(const std::string& run_dir,
                                             std::ostream& log = std::cerr) {
  const fs::path dir(run_dir);
  if (!fs::is_directory(dir)) throw IoError("report: '" + run_dir + "' is not a directory");

  std::vector<std::string> summary_files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("summary_", 0) == 0 && name.size() > 4 &&
        name.substr(name.size() - 4) == ".csv")
      summary_files.push_back(name);
  }
  std::sort(summary_files.begin(), summary_files.end());
  if (summary_files.empty())
    throw IoError("report: no summary_*.csv files in '" + run_dir + "'");

  struct SolverRow {
    std::string solver;
    Index cell = 0;
    double fval, feas, pcc, time_s, fval_post, feas_post, pcc_post;
  };
  std::vector<SolverRow> rows;
  for (const std::string& file : summary_files) {
    CsvTable table = read_csv_table((dir / file).string());
    const Index sel_col = table.column("selected");
    for (const auto& row : table.rows) {
      if (row[static_cast<size_t>(sel_col)] != "1") continue;
      SolverRow r;
      r.solver = row[static_cast<size_t>(table.column("solver"))];
      r.cell = static_cast<Index>(
          std::stol(row[static_cast<size_t>(table.column("cell"))]));
      r.fval = parse_cell_value(row[static_cast<size_t>(table.column("fval_mean"))]);
      r.feas = parse_cell_value(row[static_cast<size_t>(table.column("feas_raw_mean"))]);
      r.pcc = parse_cell_value(row[static_cast<size_t>(table.column("pcc_raw_mean"))]);
      r.time_s = parse_cell_value(row[static_cast<size_t>(table.column("time_mean_s"))]);
      r.fval_post = std::numeric_limits<double>::quiet_NaN();
      r.feas_post =
          parse_cell_value(row[static_cast<size_t>(table.column("feas_post_mean"))]);
      r.pcc_post =
          parse_cell_value(row[static_cast<size_t>(table.column("pcc_post_mean"))]);
      rows.push_back(r);
      break;
    }
  }

  std::vector<std::string> written;
  {
    std::ofstream md(dir / "report.md");
    if (!md) throw IoError("report: cannot write report.md");
    md << "# Run summary\n\n";
    md << "Selected grid cell per solver; entries are means over seeds. `*` marks\n"
          "post-processed iterates X Y^{-1/2}; `-` marks unavailable metrics.\n\n";
    md << "| Solver | Fval | PCC | Fea | Time (s) | PCC* | Fea* |\n";
    md << "|--------|------|-----|-----|----------|------|------|\n";
    for (const SolverRow& r : rows) {
      md << "| " << r.solver << " | " << markdown_cell(r.fval) << " | "
         << markdown_cell(r.pcc) << " | " << markdown_cell(r.feas) << " | "
         << markdown_cell(r.time_s) << " | " << markdown_cell(r.pcc_post) << " | "
         << markdown_cell(r.feas_post) << " |\n";
    }
    written.push_back("report.md");
  }

  // Plot data: one file per metric, x = iteration, one series per solver
  // (mean over the selected cell's seeds at matching iterations).
  const std::vector<std::string> metrics = {"fval", "feas_est", "dnorm",
                                            "grad_h", "kkt", "pcc"};
  for (const std::string& metric : metrics) {
    // solver -> iter -> (sum, count)
    std::map<std::string, std::map<Index, std::pair<double, Index>>> series;
    for (const SolverRow& r : rows) {
      for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        const std::string prefix = "metrics_" + r.solver + "_cell" + std::to_string(r.cell) + "_seed";
        if (name.rfind(prefix, 0) != 0) continue;
        CsvTable table = read_csv_table(entry.path().string());
        const Index iter_col = table.column("iter");
        const Index metric_col = table.column(metric);
        for (const auto& row : table.rows) {
          const double v = parse_cell_value(row[static_cast<size_t>(metric_col)]);
          if (std::isnan(v)) continue;
          const Index iter =
              static_cast<Index>(std::stol(row[static_cast<size_t>(iter_col)]));
          auto& bucket = series[r.solver][iter];
          bucket.first += v;
          ++bucket.second;
        }
      }
    }
    if (series.empty()) continue;
    std::set<Index> iters;
    for (const auto& [solver, data] : series)
      for (const auto& [iter, _] : data) iters.insert(iter);
    const std::string plot_name = "plot_" + metric + ".csv";
    std::ofstream plot(dir / plot_name);
    plot << "iter";
    for (const auto& [solver, _] : series) plot << ',' << solver;
    plot << '\n';
    for (Index iter : iters) {
      plot << iter;
      for (const auto& [solver, data] : series) {
        auto it = data.find(iter);
        plot << ',';
        if (it != data.end())
          plot << format_double(it->second.first / static_cast<double>(it->second.second));
      }
      plot << '\n';
    }
    written.push_back(plot_name);
  }
  log << "report: wrote " << written.size() << " file(s) to " << run_dir << '\n';
  return written;
}

}  // namespace gstiefel::run
