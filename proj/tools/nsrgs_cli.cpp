// nsrgs: synthetic instances, solves, multi-trial sweeps, theory checks and
// edge-list alignment.

#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "nsrgs/cli.hpp"

namespace cli = nsrgs::cli;
using nsrgs::Index;

namespace {

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* flag) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::istringstream in(tok);
    T v;
    if (!(in >> v) || !(in >> std::ws).eof()) throw nsrgs::InvalidArgs(std::string("bad value in ") + flag + ": '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw nsrgs::InvalidArgs(std::string(flag) + " is empty");
  return out;
}

void add_solver_flags(CLI::App* app, cli::SolverOptions& s) {
  app->add_option("--algorithm", s.algorithm, "ns_rgs or gpm")->capture_default_str();
  app->add_option("--retraction", s.retraction, "newton_schulz or exact_svd")->capture_default_str();
  app->add_option("--t-s", s.t_s, "Newton-Schulz steps per retraction")->capture_default_str();
  app->add_option("--mu", s.mu, "step size (default 1/(n p))");
  app->add_option("--max-iter", s.max_iter)->capture_default_str();
  app->add_option("--stop-tol", s.stop_tol, "relative objective decrease threshold")->capture_default_str();
  app->add_flag("--degree-normalized", s.degree_normalized, "use deg_i instead of n-1 in the gradient");
  app->add_option("--eigensolver", s.eigensolver, "auto, dense or subspace")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Orthogonal group synchronization with Newton-Schulz retraction"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  int threads = 0;
  std::string out;
  std::string format = "csv";
  bool parallel_cells = false;
  app.add_option("--seed", seed, "base random seed")->capture_default_str();
  app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)")->capture_default_str();
  app.add_option("--out", out, "output directory");
  app.add_option("--format", format, "table format: csv or json")->capture_default_str();
  app.add_flag("--parallel-cells", parallel_cells, "bench: run grid cells concurrently, one thread each");

  cli::SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic instance directory");
  synth_cmd->add_option("--n", synth.n)->capture_default_str();
  synth_cmd->add_option("--d", synth.d)->capture_default_str();
  synth_cmd->add_option("--sigma", synth.sigma)->capture_default_str();
  synth_cmd->add_option("--p", synth.p)->capture_default_str();
  synth_cmd->add_flag("--edge-list", synth.edge_list, "also write edges.txt and truth.txt");

  cli::SolveOptions solve;
  std::string solve_truth;
  auto* solve_cmd = app.add_subcommand("solve", "solve one instance");
  solve_cmd->add_option("instance", solve.instance, "instance directory or edge-list file")->required();
  solve_cmd->add_option("--truth", solve_truth, "ground-truth pose file");
  add_solver_flags(solve_cmd, solve.solver);

  cli::BenchOptions bench;
  std::string grid = "reference", ns = "500", ds = "25", sigmas = "0.02,0.1,0.2", ps = "0.5,0.8,1.0";
  std::string algorithms = "ns_rgs,gpm", t_s_list = "1";
  auto* bench_cmd = app.add_subcommand("bench", "multi-trial sweep over a grid of (n, d, sigma, p)");
  bench_cmd->add_option("--grid", grid, "'reference' (n=500, d=25, 3x3 sigma-p grid) or 'custom' (uses --n/--d/--sigma/--p lists)")->capture_default_str();
  bench_cmd->add_option("--n", ns, "comma list")->capture_default_str();
  bench_cmd->add_option("--d", ds, "comma list")->capture_default_str();
  bench_cmd->add_option("--sigma", sigmas, "comma list")->capture_default_str();
  bench_cmd->add_option("--p", ps, "comma list")->capture_default_str();
  bench_cmd->add_option("--trials", bench.trials)->capture_default_str();
  bench_cmd->add_option("--algorithms", algorithms, "comma list of ns_rgs, gpm")->capture_default_str();
  bench_cmd->add_option("--t-s-list", t_s_list, "comma list of Newton-Schulz depths")->capture_default_str();
  add_solver_flags(bench_cmd, bench.solver);

  cli::VerifyOptions verify;
  std::string verify_instance;
  auto* verify_cmd = app.add_subcommand("verify", "empirical theory checks (informational)");
  verify_cmd->add_option("--instance", verify_instance, "instance directory (otherwise generated)");
  verify_cmd->add_option("--n", verify.n)->capture_default_str();
  verify_cmd->add_option("--d", verify.d)->capture_default_str();
  verify_cmd->add_option("--sigma", verify.sigma)->capture_default_str();
  verify_cmd->add_option("--p", verify.p)->capture_default_str();
  verify_cmd->add_option("--t-max", verify.t_max)->capture_default_str();
  verify_cmd->add_flag("!--no-loo", verify.leave_one_out, "skip the leave-one-out sequences");
  add_solver_flags(verify_cmd, verify.solver);

  cli::AlignOptions align;
  std::string align_truth;
  auto* align_cmd = app.add_subcommand("align", "global alignment from an edge list");
  align_cmd->add_option("edges", align.edges, "edge-list file")->required();
  align_cmd->add_option("--truth", align_truth, "reference pose file for MSE and residuals");
  align_cmd->add_option("--bins", align.bins, "residual histogram bins")->capture_default_str();
  add_solver_flags(align_cmd, align.solver);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const cli::Format fmt = cli::parse_format(format);
    const auto out_or = [&](const char* fallback) { return out.empty() ? std::filesystem::path(fallback) : std::filesystem::path(out); };

    if (*synth_cmd) {
      synth.seed = seed;
      synth.out = out_or("instance");
      cli::cmd_synth(synth);
      std::cout << "wrote " << synth.out.string() << '\n';
    } else if (*solve_cmd) {
      if (!solve_truth.empty()) solve.truth = solve_truth;
      solve.threads = threads;
      solve.format = fmt;
      solve.out = out_or("solve_out");
      const auto s = cli::cmd_solve(solve);
      std::cout << s.report["run"]["iterations"] << " iterations, stop: " << s.result.trace.stop_reason;
      if (s.eval) std::cout << ", rel_err " << s.eval->rel_err;
      std::cout << '\n';
    } else if (*bench_cmd) {
      if (grid == "reference")
        bench.grid = cli::reference_grid();
      else if (grid == "custom")
        bench.grid = cli::cartesian_grid(parse_list<Index>(ns, "--n"), parse_list<Index>(ds, "--d"),
                                         parse_list<double>(sigmas, "--sigma"), parse_list<double>(ps, "--p"));
      else
        throw nsrgs::InvalidArgs("--grid must be 'reference' or 'custom'");
      bench.algorithms = parse_list<std::string>(algorithms, "--algorithms");
      bench.t_s = parse_list<int>(t_s_list, "--t-s-list");
      bench.seed_base = seed;
      bench.threads = threads;
      bench.parallel_cells = parallel_cells;
      bench.format = fmt;
      bench.out = out_or("bench");
      const auto rows = cli::cmd_bench(bench);
      std::cout << rows.size() << " rows written to " << bench.out.string() << '\n';
    } else if (*verify_cmd) {
      if (!verify_instance.empty()) verify.instance = verify_instance;
      verify.seed = seed;
      verify.threads = threads;
      verify.format = fmt;
      verify.out = out_or("verify");
      const auto s = cli::cmd_verify(verify);
      for (const auto& [name, check] : s.report["checks"].items())
        std::cout << name << ": " << check["status"].get<std::string>() << '\n';
    } else if (*align_cmd) {
      if (!align_truth.empty()) align.truth = align_truth;
      align.threads = threads;
      align.format = fmt;
      align.out = out_or("align");
      const auto s = cli::cmd_align(align);
      std::cout << s.result.trace.iterations() << " iterations";
      if (s.eval) std::cout << ", rel_err " << s.eval->rel_err << ", mse " << s.eval->mse;
      std::cout << '\n';
    }
  } catch (const nsrgs::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
