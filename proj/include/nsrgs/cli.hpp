#pragma once

/** Command implementations behind the `nsrgs` executable.
 *
 * Every command takes a plain options struct, writes its files under `out`
 * and returns a summary; argument parsing lives in tools/nsrgs_cli.cpp.
 * Library errors propagate unchanged and are mapped to exit codes by
 * exit_code().
 */

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "nsrgs/datagen.hpp"
#include "nsrgs/io.hpp"
#include "nsrgs/metrics.hpp"
#include "nsrgs/solver.hpp"
#include "nsrgs/theory.hpp"

namespace nsrgs::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

enum class Format { Csv, Json };

/// 0 ok, 1 usage, 2 data, 3 numerical.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgs:
    case ErrorKind::TruthRequired:
      return 1;
    case ErrorKind::ParseError:
    case ErrorKind::IoError:
    case ErrorKind::DuplicateEdge:
    case ErrorKind::DimensionMismatch:
      return 2;
    case ErrorKind::SingularInput:
    case ErrorKind::DivergenceDetected:
    case ErrorKind::EigSolverFailure:
    case ErrorKind::NonFiniteObjective:
      return 3;
  }
  return 1;
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "ns_rgs") return Algorithm::NsRgs;
  if (s == "gpm") return Algorithm::Gpm;
  throw InvalidArgs("unknown algorithm '" + s + "' (ns_rgs, gpm)");
}

inline Retraction parse_retraction(const std::string& s) {
  if (s == "newton_schulz") return Retraction::NewtonSchulz;
  if (s == "exact_svd") return Retraction::ExactSvd;
  throw InvalidArgs("unknown retraction '" + s + "' (newton_schulz, exact_svd)");
}

inline EigenSolverChoice parse_eigensolver(const std::string& s) {
  if (s == "auto") return EigenSolverChoice::Auto;
  if (s == "dense") return EigenSolverChoice::Dense;
  if (s == "subspace") return EigenSolverChoice::Subspace;
  throw InvalidArgs("unknown eigensolver '" + s + "' (auto, dense, subspace)");
}

inline Format parse_format(const std::string& s) {
  if (s == "csv") return Format::Csv;
  if (s == "json") return Format::Json;
  throw InvalidArgs("unknown format '" + s + "' (csv, json)");
}

/// Sets the OpenMP team size (0 keeps the runtime default); returns the size in effect.
inline int apply_threads(int threads) {
  if (threads < 0) throw InvalidArgs("--threads must be >= 0");
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace detail {

/// JSON has no NaN; non-finite values become null.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

/// Shortest text that round-trips to v.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::ofstream open_text(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

inline void write_json(const json& j, const fs::path& path) { open_text(path) << j.dump(2) << '\n'; }

/// A table with named columns, written as CSV or as a JSON array of objects.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;

  void write(const fs::path& stem, Format format) const {
    if (format == Format::Json) {
      json arr = json::array();
      for (const auto& r : rows) {
        json obj = json::object();
        for (std::size_t c = 0; c < columns.size(); ++c) obj[columns[c]] = r[c];
        arr.push_back(std::move(obj));
      }
      write_json(arr, fs::path(stem).replace_extension(".json"));
      return;
    }
    auto out = open_text(fs::path(stem).replace_extension(".csv"));
    for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
    out << '\n';
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) {
        if (c) out << ',';
        const json& v = r[c];
        if (v.is_null())
          out << "nan";
        else if (v.is_string())
          out << v.get<std::string>();
        else if (v.is_number_float())
          out << fmt(v.get<double>());
        else
          out << v.dump();
      }
      out << '\n';
    }
  }
};

inline Table trace_table(const IterationTrace& trace) {
  Table t{{"iter", "objective", "rel_decrease", "dist_to_truth", "rel_err", "retraction_error", "ns_defect",
           "orth_defect", "time_s"},
          {}};
  for (const auto& r : trace.records)
    t.rows.push_back({r.iter, num(r.objective), num(r.rel_decrease), num(r.dist_to_truth), num(r.rel_err),
                      num(r.retraction_error), num(r.ns_defect), num(r.orth_defect), num(r.time_s)});
  return t;
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample standard deviation; 0 for a single value.
inline double stddev(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (v.size() == 1) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  Index n = 100;
  Index d = 3;
  double sigma = 0.1;
  double p = 1.0;
  std::uint64_t seed = 0;
  fs::path out = "instance";
  /// Also write edges.txt and truth.txt for the align workflow.
  bool edge_list = false;
};

inline SyncInstance cmd_synth(const SynthOptions& o) {
  const SyncInstance inst = make_instance(o.n, o.d, o.sigma, o.p, o.seed);
  save_instance(inst, o.out);
  if (o.edge_list) {
    save_edge_list(inst.observation, o.out / "edges.txt");
    save_poses(*inst.ground_truth, o.out / "truth.txt");
  }
  return inst;
}

// ---------------------------------------------------------------------------
// solve

struct SolverOptions {
  std::string algorithm = "ns_rgs";
  std::string retraction = "newton_schulz";
  int t_s = 1;
  std::optional<double> mu;
  int max_iter = 100;
  double stop_tol = 1e-8;
  bool degree_normalized = false;
  std::string eigensolver = "auto";

  SolverConfig config() const {
    SolverConfig c;
    c.algorithm = parse_algorithm(algorithm);
    c.retraction = parse_retraction(retraction);
    c.t_s = t_s;
    c.mu = mu;
    c.max_iter = max_iter;
    c.stop_tol = stop_tol;
    c.degree_normalized = degree_normalized;
    c.eigensolver = parse_eigensolver(eigensolver);
    c.validate();
    return c;
  }
};

struct SolveOptions {
  /// Instance directory (synth output) or edge-list file.
  fs::path instance;
  std::optional<fs::path> truth;  ///< pose file, for edge-list input
  SolverOptions solver;
  int threads = 0;
  Format format = Format::Csv;
  fs::path out = "solve_out";
};

struct SolveSummary {
  RunResult result;
  std::optional<EvalReport> eval;
  json report;
};

/// Loads an instance directory or an edge-list file (with optional truth poses).
inline SyncInstance load_any(const fs::path& path, const std::optional<fs::path>& truth = {}) {
  if (fs::is_directory(path)) {
    SyncInstance inst = load_instance(path);
    if (truth) inst.ground_truth = load_poses(*truth, inst.d);
    return inst;
  }
  if (!fs::exists(path)) throw IoError("no such instance: " + path.string());
  return load_edge_list(path, truth);
}

inline json solver_json(const SolverConfig& c, const BlockObservation& obs) {
  return json{{"algorithm", to_string(c.algorithm)},
              {"retraction", to_string(c.retraction)},
              {"t_s", c.t_s},
              {"mu", c.step_size(obs)},
              {"max_iter", c.max_iter},
              {"stop_tol", c.stop_tol},
              {"degree_normalized", c.degree_normalized}};
}

inline json run_json(const RunResult& r) {
  return json{{"iterations", r.trace.iterations()},
              {"converged", r.trace.converged},
              {"stop_reason", r.trace.stop_reason},
              {"final_objective", detail::num(r.final_objective)},
              {"eigensolver", r.trace.eigensolver},
              {"eigensolver_sweeps", r.trace.eigensolver_sweeps},
              {"init_time_s", r.trace.init_time_s},
              {"solve_time_s", r.trace.solve_time_s},
              {"mean_iteration_time_s", r.trace.mean_iteration_time()},
              {"max_ns_defect", detail::num(r.trace.max_ns_defect())},
              {"ns_region", check_ns_region(r.trace)}};
}

inline SolveSummary cmd_solve(const SolveOptions& o) {
  const SolverConfig cfg = o.solver.config();
  const int threads = apply_threads(o.threads);
  const SyncInstance inst = load_any(o.instance, o.truth);
  SolveSummary s;
  s.result = run(inst.observation, cfg, inst.ground_truth ? &*inst.ground_truth : nullptr);

  json rep;
  rep["schema_version"] = kSchemaVersion;
  rep["command"] = "solve";
  rep["instance"] = {{"path", o.instance.string()},
                     {"n", inst.n},
                     {"d", inst.d},
                     {"sigma", inst.sigma},
                     {"p", inst.p},
                     {"seed", inst.seed},
                     {"has_truth", inst.ground_truth.has_value()}};
  rep["solver"] = solver_json(cfg, inst.observation);
  rep["threads"] = threads;
  rep["run"] = run_json(s.result);
  if (inst.ground_truth) {
    s.eval = evaluate(s.result.x, *inst.ground_truth);
    rep["rel_err"] = s.eval->rel_err;
    rep["d_f"] = s.eval->d_f;
    rep["mse"] = s.eval->mse;
  } else {
    rep["rel_err"] = nullptr;
    rep["d_f"] = nullptr;
    rep["mse"] = nullptr;
  }
  fs::create_directories(o.out);
  detail::write_json(rep, o.out / "result.json");
  detail::trace_table(s.result.trace).write(o.out / "trace", o.format);
  save_poses(s.result.x, o.out / "poses.txt");
  s.report = std::move(rep);
  return s;
}

// ---------------------------------------------------------------------------
// bench

struct BenchCell {
  Index n = 500;
  Index d = 25;
  double sigma = 0.02;
  double p = 1.0;
};

/// The 3 x 3 sweep at n = 500, d = 25.
inline std::vector<BenchCell> reference_grid() {
  std::vector<BenchCell> g;
  for (double p : {1.0, 0.8, 0.5})
    for (double sigma : {0.02, 0.1, 0.2}) g.push_back({500, 25, sigma, p});
  return g;
}

inline std::vector<BenchCell> cartesian_grid(const std::vector<Index>& ns, const std::vector<Index>& ds,
                                             const std::vector<double>& sigmas, const std::vector<double>& ps) {
  std::vector<BenchCell> g;
  for (Index n : ns)
    for (Index d : ds)
      for (double p : ps)
        for (double sigma : sigmas) g.push_back({n, d, sigma, p});
  return g;
}

struct BenchOptions {
  std::vector<BenchCell> grid;
  int trials = 10;
  std::vector<std::string> algorithms{"ns_rgs", "gpm"};
  std::vector<int> t_s{1};
  std::uint64_t seed_base = 0;
  SolverOptions solver;  ///< algorithm and t_s are overridden per row
  int threads = 0;
  bool parallel_cells = false;
  Format format = Format::Csv;
  fs::path out = "bench";
};

struct BenchRow {
  BenchCell cell;
  std::string algorithm;
  int t_s = 0;  ///< 0 for GPM (no Newton-Schulz)
  int trials = 0;
  std::vector<double> rel_err, dfn, time_s, iters;
  std::string status = "ok";
};

namespace detail {

struct Variant {
  Algorithm algorithm;
  int t_s;
};

inline std::vector<Variant> bench_variants(const BenchOptions& o) {
  std::vector<Variant> v;
  for (const auto& a : o.algorithms) {
    const Algorithm alg = parse_algorithm(a);
    if (alg == Algorithm::Gpm) {
      v.push_back({alg, 0});
    } else {
      for (int t : o.t_s) {
        if (t < 1) throw InvalidArgs("t_s values must be >= 1");
        v.push_back({alg, t});
      }
    }
  }
  if (v.empty()) throw InvalidArgs("no algorithms selected");
  return v;
}

/// All variants of one cell; every trial shares one instance and one
/// spectral initialization across variants.
inline std::vector<BenchRow> bench_cell(const BenchCell& cell, const BenchOptions& o,
                                        const std::vector<Variant>& variants) {
  std::vector<BenchRow> rows;
  for (const auto& v : variants) {
    BenchRow r;
    r.cell = cell;
    r.algorithm = to_string(v.algorithm);
    r.t_s = v.t_s;
    r.trials = o.trials;
    rows.push_back(std::move(r));
  }
  std::vector<int> failures(rows.size(), 0);
  std::vector<std::string> kinds(rows.size());
  for (int trial = 0; trial < o.trials; ++trial) {
    const std::uint64_t seed = o.seed_base + static_cast<std::uint64_t>(trial);
    std::optional<SyncInstance> inst;
    std::optional<SpectralInit> init;
    std::string init_error;
    try {
      inst = make_instance(cell.n, cell.d, cell.sigma, cell.p, seed);
      init = spectral_init(inst->observation, parse_eigensolver(o.solver.eigensolver));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::InvalidArgs) throw;
      init_error = to_string(e.kind());
    }
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (!init) {
        ++failures[k];
        kinds[k] = init_error;
        continue;
      }
      SolverConfig cfg = o.solver.config();
      cfg.algorithm = variants[k].algorithm;
      if (variants[k].t_s > 0) cfg.t_s = variants[k].t_s;
      cfg.record_diagnostics = false;
      try {
        const RunResult res = iterate(inst->observation, cfg, init->x);
        const BlockStack& z = *inst->ground_truth;
        rows[k].rel_err.push_back(rel_error(res.x, z));
        rows[k].dfn.push_back(dist_frob(res.x, z).value / std::sqrt(static_cast<double>(cell.n)));
        rows[k].time_s.push_back(res.trace.solve_time_s);
        rows[k].iters.push_back(res.trace.iterations());
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::InvalidArgs) throw;
        ++failures[k];
        kinds[k] = to_string(e.kind());
      }
    }
  }
  for (std::size_t k = 0; k < rows.size(); ++k)
    if (failures[k] > 0) rows[k].status = kinds[k] + ":" + std::to_string(failures[k]);
  return rows;
}

}  // namespace detail

inline std::vector<BenchRow> cmd_bench(const BenchOptions& o) {
  if (o.trials < 1) throw InvalidArgs("--trials must be >= 1");
  if (o.grid.empty()) throw InvalidArgs("bench grid is empty");
  for (const auto& c : o.grid) {
    if (c.n < 2 || c.d < 1) throw InvalidArgs("grid cells need n >= 2 and d >= 1");
    if (!(c.sigma >= 0.0) || !(c.p > 0.0 && c.p <= 1.0)) throw InvalidArgs("grid cells need sigma >= 0, 0 < p <= 1");
  }
  const auto variants = detail::bench_variants(o);
  o.solver.config();
  const int threads = o.parallel_cells ? 1 : apply_threads(o.threads);

  std::vector<std::vector<BenchRow>> per_cell(o.grid.size());
  if (o.parallel_cells) {
    std::vector<std::future<std::vector<BenchRow>>> jobs;
    for (const auto& cell : o.grid)
      jobs.push_back(std::async(std::launch::async, [&o, &variants, cell] {
#ifdef _OPENMP
        omp_set_num_threads(1);
#endif
        return detail::bench_cell(cell, o, variants);
      }));
    for (std::size_t c = 0; c < jobs.size(); ++c) per_cell[c] = jobs[c].get();
  } else {
    for (std::size_t c = 0; c < o.grid.size(); ++c) per_cell[c] = detail::bench_cell(o.grid[c], o, variants);
  }

  std::vector<BenchRow> rows;
  for (auto& cell_rows : per_cell)
    for (auto& r : cell_rows) rows.push_back(std::move(r));

  detail::Table t{{"n", "d", "sigma", "p", "algorithm", "t_s", "trials", "rel_err_mean", "rel_err_std", "dfn_mean",
                   "time_mean_s", "time_std_s", "iters_mean", "status"},
                  {}};
  for (const auto& r : rows)
    t.rows.push_back({r.cell.n, r.cell.d, r.cell.sigma, r.cell.p, r.algorithm, r.t_s, r.trials,
                      detail::num(detail::mean(r.rel_err)), detail::num(detail::stddev(r.rel_err)),
                      detail::num(detail::mean(r.dfn)), detail::num(detail::mean(r.time_s)),
                      detail::num(detail::stddev(r.time_s)), detail::num(detail::mean(r.iters)), r.status});
  fs::create_directories(o.out);
  t.write(o.out / "bench", o.format);
  detail::write_json(json{{"schema_version", kSchemaVersion},
                          {"command", "bench"},
                          {"trials", o.trials},
                          {"seed_base", o.seed_base},
                          {"threads", threads},
                          {"parallel_cells", o.parallel_cells},
                          {"rows", rows.size()}},
                     o.out / "bench_meta.json");
  return rows;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyOptions {
  std::optional<fs::path> instance;  ///< otherwise generated from the fields below
  Index n = 100;
  Index d = 3;
  double sigma = 0.05;
  double p = 1.0;
  std::uint64_t seed = 0;
  int t_max = 20;
  bool leave_one_out = true;
  SolverOptions solver;
  int threads = 0;
  Format format = Format::Csv;
  fs::path out = "verify";
};

struct VerifySummary {
  std::optional<TheoryReport> loo;
  ContractionReport contraction;
  bool ns_region = false;
  bool loo_bounded = false;
  bool incoherent = false;
  json report;
};

/// Runs every theory check. FAIL outcomes are reported, not thrown.
inline VerifySummary cmd_verify(const VerifyOptions& o) {
  if (o.t_max < 1) throw InvalidArgs("--t-max must be >= 1");
  const SolverConfig cfg = o.solver.config();
  const int threads = apply_threads(o.threads);
  const SyncInstance inst = o.instance ? load_any(*o.instance) : make_instance(o.n, o.d, o.sigma, o.p, o.seed);
  require_truth(inst);

  VerifySummary s;
  json checks = json::object();
  const auto verdict = [](bool ok) { return ok ? "PASS" : "FAIL"; };

  try {
    s.contraction = check_lemma_error_contraction(inst, cfg, o.t_max);
    checks["error_contraction"] = {{"status", verdict(s.contraction.pass)},
                                   {"constant", detail::num(s.contraction.constant)},
                                   {"threshold", s.contraction.threshold}};
  } catch (const Error& e) {
    checks["error_contraction"] = {{"status", "FAIL"}, {"error", e.what()}};
  }
  detail::Table ct{{"t", "dist", "residual"}, {}};
  for (std::size_t t = 0; t < s.contraction.dist.size(); ++t)
    ct.rows.push_back({t, detail::num(s.contraction.dist[t]),
                       t < s.contraction.residual.size() ? detail::num(s.contraction.residual[t]) : json(nullptr)});

  try {
    SolverConfig region_cfg = cfg;
    region_cfg.max_iter = o.t_max;
    const RunResult r = run(inst.observation, region_cfg, &*inst.ground_truth);
    s.ns_region = check_ns_region(r.trace);
    checks["ns_region"] = {{"status", verdict(s.ns_region)}, {"max_ns_defect", detail::num(r.trace.max_ns_defect())}};
  } catch (const Error& e) {
    checks["ns_region"] = {{"status", "FAIL"}, {"error", e.what()}};
  }

  if (o.leave_one_out) {
    try {
      s.loo = run_loo_suite(inst, cfg, o.t_max);
      s.loo_bounded = s.loo->loo_bounded();
      s.incoherent = s.loo->max_incoherence_ratio() <= 2.0;
      checks["leave_one_out"] = {{"status", verdict(s.loo_bounded)},
                                 {"max_loo_dist_t1", s.loo->max_loo_at(std::min(1, o.t_max))}};
      checks["incoherence"] = {{"status", verdict(s.incoherent)},
                               {"max_ratio", detail::num(s.loo->max_incoherence_ratio())}};
    } catch (const Error& e) {
      checks["leave_one_out"] = {{"status", "FAIL"}, {"error", e.what()}};
      checks["incoherence"] = {{"status", "FAIL"}, {"error", e.what()}};
    }
  }

  fs::create_directories(o.out);
  ct.write(o.out / "contraction", o.format);
  if (s.loo) {
    if (o.format == Format::Csv) {
      auto out = detail::open_text(o.out / "theory.csv");
      write_theory_csv(*s.loo, out);
    } else {
      json arr = json::array();
      for (const auto& r : s.loo->rows)
        arr.push_back({{"t", r.t},
                       {"dist_scaled", detail::num(r.dist_scaled)},
                       {"max_block_dev", detail::num(r.max_block_dev)},
                       {"max_loo_dist", detail::num(r.max_loo_dist)},
                       {"incoherence_ratio", detail::num(r.incoherence_ratio)},
                       {"ns_defect", detail::num(r.ns_defect)},
                       {"retraction_error", detail::num(r.retraction_error)},
                       {"contraction", detail::num(r.contraction)},
                       {"sigma_min_ratio", detail::num(r.sigma_min_ratio)}});
      detail::write_json(arr, o.out / "theory.json");
    }
  }
  s.report = json{{"schema_version", kSchemaVersion},
                  {"command", "verify"},
                  {"instance", {{"n", inst.n}, {"d", inst.d}, {"sigma", inst.sigma}, {"p", inst.p}, {"seed", inst.seed}}},
                  {"solver", solver_json(cfg, inst.observation)},
                  {"t_max", o.t_max},
                  {"threads", threads},
                  {"checks", checks}};
  detail::write_json(s.report, o.out / "verify.json");
  return s;
}

// ---------------------------------------------------------------------------
// align

struct AlignOptions {
  fs::path edges;
  std::optional<fs::path> truth;
  SolverOptions solver;
  int bins = 20;
  int threads = 0;
  Format format = Format::Csv;
  fs::path out = "align";
};

struct AlignSummary {
  RunResult result;
  std::optional<EvalReport> eval;
  json report;
};

/// Solves an edge-list instance, writes poses and, with truth, per-node
/// residuals and their histogram.
inline AlignSummary cmd_align(const AlignOptions& o) {
  if (o.bins < 1) throw InvalidArgs("--bins must be >= 1");
  const SolverConfig cfg = o.solver.config();
  const int threads = apply_threads(o.threads);
  const SyncInstance inst = load_edge_list(o.edges, o.truth);
  AlignSummary s;
  s.result = run(inst.observation, cfg, inst.ground_truth ? &*inst.ground_truth : nullptr);
  fs::create_directories(o.out);
  save_poses(s.result.x, o.out / "poses.txt");

  json rep{{"schema_version", kSchemaVersion},
           {"command", "align"},
           {"edges", o.edges.string()},
           {"n", inst.n},
           {"d", inst.d},
           {"observed_pairs", inst.observation.observed_pairs()},
           {"solver", solver_json(cfg, inst.observation)},
           {"threads", threads},
           {"run", run_json(s.result)}};
  if (inst.ground_truth) {
    s.eval = evaluate(s.result.x, *inst.ground_truth);
    rep["rel_err"] = s.eval->rel_err;
    rep["mse"] = s.eval->mse;
    rep["d_f"] = s.eval->d_f;

    detail::Table res{{"node", "residual"}, {}};
    for (std::size_t i = 0; i < s.eval->residuals.size(); ++i) res.rows.push_back({i + 1, s.eval->residuals[i]});
    res.write(o.out / "residuals", o.format);

    const double hi = *std::max_element(s.eval->residuals.begin(), s.eval->residuals.end());
    const double width = hi > 0.0 ? hi / o.bins : 1.0;
    std::vector<int> counts(static_cast<std::size_t>(o.bins), 0);
    for (double r : s.eval->residuals)
      ++counts[std::min(static_cast<std::size_t>(r / width), counts.size() - 1)];
    detail::Table hist{{"bin_lo", "bin_hi", "count"}, {}};
    for (int b = 0; b < o.bins; ++b) hist.rows.push_back({b * width, (b + 1) * width, counts[static_cast<std::size_t>(b)]});
    hist.write(o.out / "residual_hist", o.format);
  }
  detail::write_json(rep, o.out / "result.json");
  s.report = std::move(rep);
  return s;
}

}  // namespace nsrgs::cli
