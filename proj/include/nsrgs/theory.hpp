#pragma once

/** Empirical checks of the convergence analysis.
 *
 * The leave-one-out construction removes the noise in row/column l of the
 * observation (keeping the signal Z_l Z_j^T) and reruns the iteration with
 * exact retraction; the distance between the main and auxiliary sequences
 * measures how strongly X^t depends on any single noise row. Alongside it we
 * track the incoherence ratio ||W_l^T X^t||_F / (sqrt(nd)(sqrt(d) + 10 sqrt(log n))),
 * the Newton-Schulz feasibility margin ||I - F_i^T F_i||_2, and the additive
 * constant of the halving contraction d_F(X^{t+1}, Z) <= d_F(X^t, Z)/2 + C.
 */

#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "nsrgs/datagen.hpp"
#include "nsrgs/metrics.hpp"
#include "nsrgs/solver.hpp"

namespace nsrgs {

inline const BlockStack& require_truth(const SyncInstance& inst) {
  if (!inst.ground_truth) throw TruthRequired("instance has no ground truth");
  return *inst.ground_truth;
}

/// Observation with the noise of row/column l removed; l is 0-based.
inline BlockObservation leave_one_out_observation(const SyncInstance& inst, Index l) {
  const BlockStack& z = require_truth(inst);
  if (l < 0 || l >= inst.observation.n()) throw InvalidArgs("leave-one-out index out of range");
  BlockObservation out = inst.observation;
  for (Index j = 0; j < out.n(); ++j) {
    if (j == l || !out.observed(l, j)) continue;
    out.set_block(l, j, z.block(l) * z.block(j).transpose());
  }
  return out;
}

/// W = (A - Z Z^T on observed pairs) / sigma; zero when sigma = 0.
inline Matrix noise_matrix(const SyncInstance& inst) {
  const BlockStack& z = require_truth(inst);
  const auto& obs = inst.observation;
  const Index d = obs.d();
  Matrix w = Matrix::Zero(obs.dense().rows(), obs.dense().cols());
  if (inst.sigma == 0.0) return w;
  for (Index i = 0; i < obs.n(); ++i)
    for (Index j = 0; j < obs.n(); ++j) {
      if (i == j || !obs.observed(i, j)) continue;
      w.block(i * d, j * d, d, d) = (obs.block(i, j) - z.block(i) * z.block(j).transpose()) / inst.sigma;
    }
  return w;
}

inline double incoherence_scale(Index n, Index d) {
  const double nd = static_cast<double>(n * d);
  return std::sqrt(nd) * (std::sqrt(static_cast<double>(d)) + 10.0 * std::sqrt(std::log(static_cast<double>(n))));
}

struct TheoryRow {
  int t = 0;
  double dist_scaled = 0.0;        ///< d_F(X^t, Z) / sqrt(n)
  double max_block_dev = 0.0;      ///< max_i ||X_i^t - Z_i Q^t||_F, Q^t = sgn(Z^T X^t)
  double max_loo_dist = 0.0;       ///< max_l d_F(X^t, X^{t,(l)})
  double incoherence_ratio = 0.0;  ///< max_l ||W_l^T X^t||_F / incoherence_scale
  double ns_defect = std::numeric_limits<double>::quiet_NaN();  ///< max_i ||I - F_i^T F_i||_2 producing X^t
  double retraction_error = 0.0;   ///< e_F^t
  double contraction = std::numeric_limits<double>::quiet_NaN();  ///< d_F(X^{t+1},Z) / d_F(X^t,Z)
  double sigma_min_ratio = std::numeric_limits<double>::quiet_NaN();  ///< sigma_min(Z^T X^t) / (n (1 - eps^2/2))
};

struct TheoryReport {
  std::vector<TheoryRow> rows;
  Index n = 0;
  Index d = 0;
  double sigma = 0.0;

  double max_loo_at(int t) const { return rows.at(static_cast<std::size_t>(t)).max_loo_dist; }

  /// max_l d_F(X^t, X^{t,(l)}) never exceeds `factor` times its t = 1 value
  /// (with an absolute floor for the noiseless case).
  bool loo_bounded(double factor = 3.0, double floor = 1e-9) const {
    if (rows.size() < 2) return true;
    const double limit = std::max(factor * rows[1].max_loo_dist, floor);
    for (const auto& r : rows)
      if (!(r.max_loo_dist <= limit)) return false;
    return true;
  }

  double max_incoherence_ratio() const {
    double m = 0.0;
    for (const auto& r : rows) m = std::max(m, r.incoherence_ratio);
    return m;
  }

  double max_ns_defect() const {
    double m = 0.0;
    for (const auto& r : rows)
      if (!std::isnan(r.ns_defect)) m = std::max(m, r.ns_defect);
    return m;
  }
};

namespace detail {

inline void tag_sequence_error(const Error& e, Index l) {
  throw Error(e.kind(), "sequence " + std::to_string(l) + ": " + e.what(), e.blocks());
}

/// Iterates 0..t_max of one sequence, plus step stats for 1..t_max.
struct Trajectory {
  std::vector<BlockStack> iterates;
  std::vector<StepStats> stats;  ///< stats[t-1] produced iterates[t]
};

inline Trajectory trajectory(const BlockObservation& obs, SolverConfig config, int t_max) {
  config.max_iter = t_max;
  config.early_stop = false;
  config.record_diagnostics = true;
  Trajectory tr;
  tr.iterates.reserve(static_cast<std::size_t>(t_max) + 1);
  run(obs, config, nullptr, [&](int, const BlockStack& x, const StepStats* st) {
    tr.iterates.push_back(x);
    if (st) tr.stats.push_back(*st);
  });
  return tr;
}

}  // namespace detail

/** Main sequence (configured retraction) plus n leave-one-out sequences
 * (exact retraction), t_max iterations each, no early stopping.
 */
inline TheoryReport run_loo_suite(const SyncInstance& inst, const SolverConfig& config, int t_max) {
  const BlockStack& z = require_truth(inst);
  if (t_max < 1) throw InvalidArgs("t_max must be >= 1");
  config.validate();
  const Index n = inst.observation.n();
  const Index d = inst.observation.d();

  detail::Trajectory main;
  try {
    main = detail::trajectory(inst.observation, config, t_max);
  } catch (const Error& e) {
    detail::tag_sequence_error(e, 0);
  }

  TheoryReport rep;
  rep.n = n;
  rep.d = d;
  rep.sigma = inst.sigma;
  const Matrix w = noise_matrix(inst);
  const double scale = incoherence_scale(n, d);
  std::vector<double> dists;
  for (int t = 0; t <= t_max; ++t) {
    const BlockStack& x = main.iterates[static_cast<std::size_t>(t)];
    TheoryRow row;
    row.t = t;
    const Distance dist = dist_frob(x, z);
    dists.push_back(dist.value);
    row.dist_scaled = dist.value / std::sqrt(static_cast<double>(n));
    const Matrix ztx = stack_gram(z, x);
    const Matrix q = dist.q ? *dist.q : polar_factor(ztx);
    for (Index i = 0; i < n; ++i)
      row.max_block_dev = std::max(row.max_block_dev, (x.block(i) - z.block(i) * q).norm());
    const Matrix wx = w * x.matrix();
    for (Index l = 0; l < n; ++l)
      row.incoherence_ratio = std::max(row.incoherence_ratio, wx.middleRows(l * d, d).norm() / scale);
    if (t > 0) {
      const StepStats& st = main.stats[static_cast<std::size_t>(t - 1)];
      row.ns_defect = st.max_ns_defect;
      row.retraction_error = st.retraction_error;
    }
    const double eps = row.dist_scaled;
    Eigen::JacobiSVD<Matrix> svd(ztx);
    row.sigma_min_ratio = svd.singularValues()(d - 1) / (static_cast<double>(n) * (1.0 - 0.5 * eps * eps));
    rep.rows.push_back(row);
  }
  for (int t = 0; t < t_max; ++t)
    rep.rows[static_cast<std::size_t>(t)].contraction =
        dists[static_cast<std::size_t>(t)] > 0.0 ? dists[static_cast<std::size_t>(t) + 1] / dists[static_cast<std::size_t>(t)]
                                                 : 0.0;

  SolverConfig aux = config;
  aux.retraction = Retraction::ExactSvd;
  for (Index l = 0; l < n; ++l) {
    detail::Trajectory seq;
    try {
      seq = detail::trajectory(leave_one_out_observation(inst, l), aux, t_max);
    } catch (const Error& e) {
      detail::tag_sequence_error(e, l + 1);
    }
    for (int t = 0; t <= t_max; ++t) {
      auto& row = rep.rows[static_cast<std::size_t>(t)];
      const double dl = dist_frob(main.iterates[static_cast<std::size_t>(t)],
                                  seq.iterates[static_cast<std::size_t>(t)]).value;
      row.max_loo_dist = std::max(row.max_loo_dist, dl);
    }
  }
  return rep;
}

struct ContractionReport {
  std::vector<double> dist;      ///< d_F(X^t, Z), t = 0..t_max
  std::vector<double> residual;  ///< d_F(X^{t+1}, Z) - d_F(X^t, Z)/2
  double constant = 0.0;         ///< smallest C >= 0 covering every step
  double threshold = 0.0;        ///< 8 sigma sqrt(n d), floored at 1e-8
  bool pass = false;
};

/// Smallest C with d_F(X^{t+1},Z) <= d_F(X^t,Z)/2 + C over t_max steps.
inline ContractionReport check_lemma_error_contraction(const SyncInstance& inst, const SolverConfig& config,
                                                       int t_max) {
  const BlockStack& z = require_truth(inst);
  if (t_max < 1) throw InvalidArgs("t_max must be >= 1");
  ContractionReport rep;
  SolverConfig cfg = config;
  cfg.max_iter = t_max;
  cfg.early_stop = false;
  cfg.record_diagnostics = false;
  run(inst.observation, cfg, nullptr,
      [&](int, const BlockStack& x, const StepStats*) { rep.dist.push_back(dist_frob(x, z).value); });
  for (std::size_t t = 0; t + 1 < rep.dist.size(); ++t) {
    const double r = rep.dist[t + 1] - 0.5 * rep.dist[t];
    rep.residual.push_back(r);
    rep.constant = std::max(rep.constant, r);
  }
  const double nd = static_cast<double>(inst.observation.n() * inst.observation.d());
  rep.threshold = std::max(8.0 * inst.sigma * std::sqrt(nd), 1e-8);
  rep.pass = std::isfinite(rep.constant) && rep.constant <= rep.threshold;
  return rep;
}

/// True iff every recorded max_i ||I - F_i^T F_i||_2 is finite and < 1.
inline bool check_ns_region(const IterationTrace& trace) {
  if (trace.records.size() < 2) return false;
  for (std::size_t k = 1; k < trace.records.size(); ++k) {
    const double v = trace.records[k].ns_defect;
    if (!(std::isfinite(v) && v < 1.0)) return false;
  }
  return true;
}

/// Long-format CSV: t,quantity,value.
inline void write_theory_csv(const TheoryReport& rep, std::ostream& out) {
  out << "t,quantity,value\n";
  out.precision(17);
  for (const auto& r : rep.rows) {
    const auto emit = [&](const char* name, double v) { out << r.t << ',' << name << ',' << v << '\n'; };
    emit("dist_scaled", r.dist_scaled);
    emit("max_block_dev", r.max_block_dev);
    emit("max_loo_dist", r.max_loo_dist);
    emit("incoherence_ratio", r.incoherence_ratio);
    emit("ns_defect", r.ns_defect);
    emit("retraction_error", r.retraction_error);
    emit("contraction", r.contraction);
    emit("sigma_min_ratio", r.sigma_min_ratio);
  }
}

}  // namespace nsrgs
