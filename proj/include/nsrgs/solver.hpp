#pragma once

/** Spectral initialization and the two synchronization iterations.
 *
 * NS-RGS (Riemannian gradient synchronization with Newton-Schulz retraction):
 *   G_i = sum_{j != i} (X_i - A_ij X_j)
 *   F_i = X_i - mu * P_{T_{X_i}}(G_i)
 *   X_i <- NS_{t_s}(F_i)            (or sgn(F_i) for exact retraction)
 * GPM (generalized power method):
 *   X_i <- sgn(sum_{j != i} A_ij X_j)
 *
 * Both are Jacobi updates: block i reads only the previous iterate. Unobserved
 * pairs carry A_ij = 0, so sum_j A_ij X_j is the product A X of the dense
 * observation with the stack, and the identity term of G_i has coefficient
 * n - 1 (or the observed degree when `degree_normalized` is set).
 */

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "nsrgs/blockmat.hpp"
#include "nsrgs/datagen.hpp"
#include "nsrgs/metrics.hpp"

namespace nsrgs {

enum class Algorithm { NsRgs, Gpm };
enum class Retraction { NewtonSchulz, ExactSvd };
enum class EigenSolverChoice { Auto, Dense, Subspace };

inline const char* to_string(Algorithm a) { return a == Algorithm::NsRgs ? "ns_rgs" : "gpm"; }
inline const char* to_string(Retraction r) {
  return r == Retraction::NewtonSchulz ? "newton_schulz" : "exact_svd";
}

struct SolverConfig {
  std::optional<double> mu;  ///< step size; 1/(n p) when unset
  int t_s = 1;
  int max_iter = 100;
  double stop_tol = 1e-8;
  Retraction retraction = Retraction::NewtonSchulz;
  Algorithm algorithm = Algorithm::NsRgs;
  bool degree_normalized = false;
  /// Apply the relative-decrease stopping rule; off runs exactly max_iter steps.
  bool early_stop = true;
  /// Per-step ||I - F^T F||_2, e_F and orthogonality defect (excluded from timing).
  bool record_diagnostics = true;
  EigenSolverChoice eigensolver = EigenSolverChoice::Auto;

  void validate() const {
    if (mu && !(*mu > 0.0 && std::isfinite(*mu))) throw InvalidArgs("mu must be > 0");
    if (retraction == Retraction::NewtonSchulz && t_s < 1)
      throw InvalidArgs("t_s must be >= 1 for Newton-Schulz retraction");
    if (max_iter < 1) throw InvalidArgs("max_iter must be >= 1");
    if (!(stop_tol > 0.0)) throw InvalidArgs("stop_tol must be > 0");
  }

  double step_size(const BlockObservation& obs) const {
    if (mu) return *mu;
    return 1.0 / (static_cast<double>(obs.n()) * obs.sampling_rate());
  }
};

// ---------------------------------------------------------------------------
// Spectral initialization

/// nd above this uses block subspace iteration instead of a dense eigensolver.
inline constexpr Index kDenseEigenLimit = 2000;
inline constexpr double kSubspaceTol = 1e-10;
inline constexpr int kSubspaceMaxSweeps = 5000;

struct SpectralInit {
  BlockStack x;  ///< blockwise sgn of y
  Matrix y;      ///< top-d orthonormal eigenvectors, (n*d) x d
  std::string eigensolver;
  int sweeps = 0;
  double gap = 0.0;  ///< lambda_d - lambda_{d+1}
};

namespace detail {

inline void check_gap(double top_d, double next, double scale) {
  const double gap = top_d - next;
  if (!(gap > 1e-12 * std::max(1.0, scale)))
    throw EigSolverFailure("no spectral gap after the top d eigenvalues (gap = " +
                           std::to_string(gap) + ")");
}

/// Symmetric eigenpairs in ascending order. The order is re-imposed here
/// rather than trusted: some auto-vectorized builds of Eigen 3.4 have been
/// seen to return it unsorted.
struct SortedEigen {
  Vector values;
  Matrix vectors;
};

inline SortedEigen sorted_eigen(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  if (es.info() != Eigen::Success) throw EigSolverFailure("symmetric eigensolver did not converge");
  const Index m = a.rows();
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index x, Index y) { return es.eigenvalues()(x) < es.eigenvalues()(y); });
  SortedEigen out{Vector(m), Matrix(m, m)};
  for (Index k = 0; k < m; ++k) {
    out.values(k) = es.eigenvalues()(order[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = es.eigenvectors().col(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

inline void dense_top_eigvecs(const Matrix& a, Index d, SpectralInit& out) {
  const SortedEigen es = sorted_eigen(a);
  const Index m = a.rows();
  const Vector& w = es.values;
  check_gap(w(m - d), w(m - d - 1), w.cwiseAbs().maxCoeff());
  out.gap = w(m - d) - w(m - d - 1);
  out.y = es.vectors.rightCols(d);
  out.eigensolver = "dense";
  out.sweeps = 1;
}

/// Block subspace iteration with Rayleigh-Ritz on 2d vectors (capped at nd).
inline void subspace_top_eigvecs(const Matrix& a, Index d, SpectralInit& out) {
  const Index m = a.rows();
  const Index k = std::min(m, 2 * d);
  Rng rng(derive_seed(0x5EEDu, 7));
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix v(m, k);
  for (Index c = 0; c < k; ++c)
    for (Index r = 0; r < m; ++r) v(r, c) = normal(rng);
  {
    Eigen::HouseholderQR<Matrix> qr(v);
    v = qr.householderQ() * Matrix::Identity(m, k);
  }
  Matrix w(m, k);
  for (int sweep = 1; sweep <= kSubspaceMaxSweeps; ++sweep) {
    w.noalias() = a * v;
    Matrix h = v.transpose() * w;
    h = (0.5 * (h + h.transpose())).eval();
    const SortedEigen es = sorted_eigen(h);
    const Vector& theta = es.values;
    v = (v * es.vectors).eval();
    w = (w * es.vectors).eval();
    const double scale = theta.cwiseAbs().maxCoeff();
    if (k > d) check_gap(theta(k - d), theta(k - d - 1), scale);
    const Matrix resid = w.rightCols(d) - v.rightCols(d) * theta.tail(d).asDiagonal();
    if (resid.norm() <= kSubspaceTol * scale) {
      out.y = v.rightCols(d);
      out.gap = k > d ? theta(k - d) - theta(k - d - 1) : std::numeric_limits<double>::quiet_NaN();
      out.eigensolver = "subspace";
      out.sweeps = sweep;
      return;
    }
    Eigen::HouseholderQR<Matrix> qr(w);
    v = qr.householderQ() * Matrix::Identity(m, k);
  }
  throw EigSolverFailure("subspace iteration did not reach tolerance in " +
                         std::to_string(kSubspaceMaxSweeps) + " sweeps");
}

}  // namespace detail

inline SpectralInit spectral_init(const BlockObservation& obs,
                                  EigenSolverChoice choice = EigenSolverChoice::Auto) {
  const Index d = obs.d();
  const Index m = obs.n() * d;
  SpectralInit out;
  const bool dense = choice == EigenSolverChoice::Dense ||
                     (choice == EigenSolverChoice::Auto && m <= kDenseEigenLimit);
  if (dense)
    detail::dense_top_eigvecs(obs.dense(), d, out);
  else
    detail::subspace_top_eigvecs(obs.dense(), d, out);
  out.x = sign_blocks(BlockStack(out.y, d));
  return out;
}

// ---------------------------------------------------------------------------
// Objective

/// F(X) = sum over observed ordered pairs i != j of ||X_i X_j^T - A_ij||_F^2 / 2.
inline double objective(const BlockStack& x, const BlockObservation& obs) {
  if (x.n() != obs.n() || x.d() != obs.d()) throw DimensionMismatch("stack does not match observation");
  double acc = 0.0;
  Matrix r(x.d(), x.d());
  for (Index i = 0; i < obs.n(); ++i)
    for (Index j = 0; j < obs.n(); ++j) {
      if (i == j || !obs.observed(i, j)) continue;
      r.noalias() = x.block(i) * x.block(j).transpose();
      r -= obs.block(i, j);
      acc += 0.5 * r.squaredNorm();
    }
  return acc;
}

/// sum_j A_ij X_j for every i, i.e. the product A X.
inline Matrix aggregate(const BlockObservation& obs, const BlockStack& x) {
  if (x.n() != obs.n() || x.d() != obs.d()) throw DimensionMismatch("stack does not match observation");
  Matrix ax(x.matrix().rows(), x.d());
  ax.noalias() = obs.dense() * x.matrix();
  return ax;
}

/** F(X) from a precomputed A X, by expanding the square:
 *   F = 1/2 sum_{obs ij} <X_i^T X_i, X_j^T X_j> - sum_i <X_i, (AX)_i> + ||A||_F^2 / 2.
 * Returns the value and the magnitude of its terms (for round-off floors).
 */
struct FastObjective {
  double value = 0.0;
  double scale = 0.0;
};

inline FastObjective objective_from_aggregate(const BlockStack& x, const Matrix& ax,
                                              const BlockObservation& obs, double a_sq_norm) {
  const Index n = x.n();
  const Index d = x.d();
  Matrix grams(n, d * d);
  Matrix g(d, d);
  for (Index i = 0; i < n; ++i) {
    g.noalias() = x.block(i).transpose() * x.block(i);
    grams.row(i) = Eigen::Map<const Eigen::RowVectorXd>(g.data(), d * d);
  }
  const double quad = grams.cwiseProduct(obs.mask() * grams).sum();
  const double cross = x.matrix().cwiseProduct(ax).sum();
  const double value = 0.5 * quad - cross + 0.5 * a_sq_norm;
  return {value, 0.5 * quad + std::abs(cross) + 0.5 * a_sq_norm};
}

// ---------------------------------------------------------------------------
// Steps

struct StepStats {
  double max_ns_defect = 0.0;      ///< max_i ||I - F_i^T F_i||_2
  Index worst_block = 0;           ///< argmax of the above
  double retraction_error = 0.0;   ///< e_F = ||X^{t+1} - sgn(F^t)||_F
  double max_orth_defect = 0.0;    ///< max_i ||I - X_i^T X_i||_2 of the output
};

struct StepResult {
  BlockStack x;
  Matrix pre_retraction;  ///< F stack (NS-RGS) or A X (GPM), (n*d) x d
  StepStats stats;
};

namespace detail {

inline void throw_block_errors(const std::vector<std::size_t>& singular,
                               const std::vector<std::size_t>& diverged) {
  if (!diverged.empty())
    throw DivergenceDetected("Newton-Schulz diverged (outside ||I - F^T F||_2 < 1) at block " +
                                 std::to_string(diverged.front()),
                             diverged);
  if (!singular.empty())
    throw SingularInput("rank-deficient retraction input at block " + std::to_string(singular.front()),
                        singular);
}

inline void collect_flags(const std::vector<char>& flags, std::vector<std::size_t>& out) {
  for (std::size_t i = 0; i < flags.size(); ++i)
    if (flags[i]) out.push_back(i);
}

}  // namespace detail

/// ||I - F_i^T F_i||_2 over blocks, e_F, and the output orthogonality defect.
/// For GPM (`pre_is_f` false) the retraction is exact, so e_F = 0.
inline StepStats step_diagnostics(const Matrix& pre, const BlockStack& next, bool pre_is_f) {
  StepStats st;
  const Index n = next.n();
  const Index d = next.d();
  double ef_sq = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Matrix f = pre.middleRows(i * d, d);
    if (pre_is_f) {
      const double defect = ns_defect(f);
      if (defect > st.max_ns_defect || i == 0) {
        st.max_ns_defect = defect;
        st.worst_block = i;
      }
    }
    if (pre_is_f) {
      try {
        ef_sq += (Matrix(next.block(i)) - matrix_sign_svd(f).value).squaredNorm();
      } catch (const SingularInput&) {
        ef_sq = std::numeric_limits<double>::quiet_NaN();
      }
    }
    st.max_orth_defect = std::max(st.max_orth_defect, ns_defect(next.block(i)));
  }
  st.retraction_error = std::sqrt(ef_sq);
  if (!pre_is_f) st.max_ns_defect = std::numeric_limits<double>::quiet_NaN();
  return st;
}

/// NS-RGS update given A X for the current iterate (no diagnostics).
inline StepResult ns_rgs_update(const BlockStack& x, const Matrix& ax, const BlockObservation& obs,
                                const SolverConfig& config) {
  const Index n = x.n();
  const Index d = x.d();
  const double mu = config.step_size(obs);
  StepResult out{BlockStack(n, d), Matrix(n * d, d), {}};
  std::vector<char> singular(static_cast<std::size_t>(n), 0);
  std::vector<char> diverged(static_cast<std::size_t>(n), 0);
  Matrix& next = out.x.mutable_matrix();

#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) {
    const Matrix xi = x.block(i);
    const double coef = config.degree_normalized ? static_cast<double>(obs.degree(i))
                                                 : static_cast<double>(n - 1);
    const Matrix g = coef * xi - ax.middleRows(i * d, d);
    const Matrix f = xi - mu * tangent_project(xi, g);
    out.pre_retraction.middleRows(i * d, d) = f;
    try {
      if (config.retraction == Retraction::NewtonSchulz)
        next.middleRows(i * d, d) = newton_schulz(f, config.t_s);
      else
        next.middleRows(i * d, d) = matrix_sign_svd(f).value;
    } catch (const DivergenceDetected&) {
      diverged[static_cast<std::size_t>(i)] = 1;
    } catch (const SingularInput&) {
      singular[static_cast<std::size_t>(i)] = 1;
    }
  }
  std::vector<std::size_t> bad_sing, bad_div;
  detail::collect_flags(singular, bad_sing);
  detail::collect_flags(diverged, bad_div);
  detail::throw_block_errors(bad_sing, bad_div);
  if (config.retraction == Retraction::ExactSvd) out.x.mark_orthogonal();
  return out;
}

/// GPM update given A X for the current iterate.
inline StepResult gpm_update(const BlockStack& x, const Matrix& ax) {
  const Index n = x.n();
  const Index d = x.d();
  StepResult out{BlockStack(n, d), ax, {}};
  std::vector<char> singular(static_cast<std::size_t>(n), 0);
  Matrix& next = out.x.mutable_matrix();

#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) {
    try {
      next.middleRows(i * d, d) = matrix_sign_svd(ax.middleRows(i * d, d)).value;
    } catch (const SingularInput&) {
      singular[static_cast<std::size_t>(i)] = 1;
    }
  }
  std::vector<std::size_t> bad;
  detail::collect_flags(singular, bad);
  detail::throw_block_errors(bad, {});
  out.x.mark_orthogonal();
  return out;
}

/// One NS-RGS iteration from x, with step statistics.
inline StepResult ns_rgs_step(const BlockStack& x, const BlockObservation& obs,
                              const SolverConfig& config) {
  StepResult r = ns_rgs_update(x, aggregate(obs, x), obs, config);
  r.stats = step_diagnostics(r.pre_retraction, r.x, true);
  return r;
}

inline BlockStack gpm_step(const BlockStack& x, const BlockObservation& obs) {
  return gpm_update(x, aggregate(obs, x)).x;
}

// ---------------------------------------------------------------------------
// Driver

struct IterationRecord {
  int iter = 0;
  double objective = 0.0;
  double rel_decrease = std::numeric_limits<double>::quiet_NaN();  ///< R^{t-1}
  double dist_to_truth = std::numeric_limits<double>::quiet_NaN();
  double rel_err = std::numeric_limits<double>::quiet_NaN();
  double retraction_error = 0.0;
  double ns_defect = std::numeric_limits<double>::quiet_NaN();
  double orth_defect = 0.0;
  double time_s = 0.0;
};

struct IterationTrace {
  std::vector<IterationRecord> records;  ///< records[0] is the initialization
  std::string eigensolver;
  int eigensolver_sweeps = 0;
  double init_time_s = 0.0;
  double solve_time_s = 0.0;
  bool converged = false;
  std::string stop_reason;

  int iterations() const { return records.empty() ? 0 : static_cast<int>(records.size()) - 1; }

  double mean_iteration_time() const {
    if (records.size() < 2) return 0.0;
    double s = 0.0;
    for (std::size_t k = 1; k < records.size(); ++k) s += records[k].time_s;
    return s / static_cast<double>(records.size() - 1);
  }

  double max_ns_defect() const {
    double m = 0.0;
    for (std::size_t k = 1; k < records.size(); ++k)
      if (!std::isnan(records[k].ns_defect)) m = std::max(m, records[k].ns_defect);
    return m;
  }
};

struct RunResult {
  BlockStack x;
  IterationTrace trace;
  double final_objective = 0.0;  ///< exact (direct) evaluation at the returned iterate
};

/// Called after every iterate; `stats` is null for the initialization.
using IterateObserver = std::function<void(int t, const BlockStack& x, const StepStats* stats)>;

inline constexpr double kObjectiveFloorFactor = 1e3;

/// Runs the configured iteration from x0 (spectral init is the caller's job).
inline RunResult iterate(const BlockObservation& obs, const SolverConfig& config, BlockStack x0,
                         const BlockStack* truth = nullptr, const IterateObserver& observer = {}) {
  config.validate();
  if (x0.n() != obs.n() || x0.d() != obs.d()) throw DimensionMismatch("x0 does not match observation");
  if (truth) require_same_shape(*truth, x0);
  using clock = std::chrono::steady_clock;

  const double a_sq = obs.dense().squaredNorm();
  const double eps = std::numeric_limits<double>::epsilon();
  RunResult res;
  res.x = std::move(x0);
  Matrix ax = aggregate(obs, res.x);
  FastObjective fobj = objective_from_aggregate(res.x, ax, obs, a_sq);

  auto record_truth = [&](IterationRecord& rec, const BlockStack& x) {
    if (!truth) return;
    rec.dist_to_truth = dist_frob(x, *truth).value;
    rec.rel_err = rel_error(x, *truth);
  };

  IterationRecord rec0;
  rec0.objective = std::max(0.0, fobj.value);
  rec0.orth_defect = config.record_diagnostics ? max_block_ns_defect(res.x) : 0.0;
  record_truth(rec0, res.x);
  res.trace.records.push_back(rec0);
  if (observer) observer(0, res.x, nullptr);

  const auto solve_start = clock::now();
  double diag_time = 0.0;
  res.trace.stop_reason = "max_iter";
  for (int t = 1; t <= config.max_iter; ++t) {
    const auto t0 = clock::now();
    StepResult step = config.algorithm == Algorithm::NsRgs ? ns_rgs_update(res.x, ax, obs, config)
                                                           : gpm_update(res.x, ax);
    ax = aggregate(obs, step.x);
    const FastObjective next = objective_from_aggregate(step.x, ax, obs, a_sq);
    const auto t1 = clock::now();

    if (!std::isfinite(next.value))
      throw NonFiniteObjective("objective is not finite at iteration " + std::to_string(t));

    IterationRecord rec;
    rec.iter = t;
    rec.time_s = std::chrono::duration<double>(t1 - t0).count();
    const double floor = kObjectiveFloorFactor * eps * next.scale;
    const double f_prev = std::max(0.0, fobj.value);
    const double f_next = next.value <= floor ? 0.0 : next.value;
    rec.objective = f_next;
    rec.rel_decrease = f_next > 0.0 ? (f_prev - f_next) / f_next : 0.0;

    if (config.record_diagnostics) {
      const auto d0 = clock::now();
      step.stats = step_diagnostics(step.pre_retraction, step.x,
                                    config.algorithm == Algorithm::NsRgs);
      rec.retraction_error = step.stats.retraction_error;
      rec.ns_defect = step.stats.max_ns_defect;
      rec.orth_defect = step.stats.max_orth_defect;
      record_truth(rec, step.x);
      diag_time += std::chrono::duration<double>(clock::now() - d0).count();
    } else {
      record_truth(rec, step.x);
    }
    res.trace.records.push_back(rec);
    res.x = std::move(step.x);
    fobj = next;
    if (observer) observer(t, res.x, config.record_diagnostics ? &step.stats : nullptr);

    if (!config.early_stop) continue;
    if (f_next == 0.0) {
      res.trace.converged = true;
      res.trace.stop_reason = "zero_objective";
      break;
    }
    if (rec.rel_decrease < config.stop_tol) {
      res.trace.converged = true;
      res.trace.stop_reason = "relative_decrease";
      break;
    }
  }
  res.trace.solve_time_s =
      std::chrono::duration<double>(clock::now() - solve_start).count() - diag_time;
  res.final_objective = objective(res.x, obs);
  return res;
}

/// Spectral initialization followed by the configured iteration.
inline RunResult run(const BlockObservation& obs, const SolverConfig& config,
                     const BlockStack* truth = nullptr, const IterateObserver& observer = {}) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  SpectralInit init = spectral_init(obs, config.eigensolver);
  const double init_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  RunResult res = iterate(obs, config, std::move(init.x), truth, observer);
  res.trace.eigensolver = init.eigensolver;
  res.trace.eigensolver_sweeps = init.sweeps;
  res.trace.init_time_s = init_time;
  return res;
}

}  // namespace nsrgs
