#pragma once

// Unrolled solvers for the unbalanced optimal transport problem
//
//   min_P <-X, P> + a0 R(P) + a1 KL(P 1_N | p0) + a2 KL(P^T 1_D | q0)
//
// with R entropic (<P, log P - 1>) or quadratic (<P, P>). Each solver runs
// exactly K modules with module-specific weights; nothing stops early and
// numerical failure is reported through SolverDiagnostics, never thrown.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "uotpool/core_numerics.hpp"

namespace uotpool {

enum class Regularizer { Entropic, Quadratic };
enum class Solver { Sinkhorn, Badmm };

inline const char* to_string(Regularizer r) noexcept {
  return r == Regularizer::Entropic ? "entropic" : "quadratic";
}
inline const char* to_string(Solver s) noexcept {
  return s == Solver::Sinkhorn ? "sinkhorn" : "badmm";
}

/// Parameters of K unrolled modules. Weight vectors always hold K entries,
/// so constant weights are the special case alpha_{i,k} = alpha_i.
struct UotParams {
  std::size_t k_iters;
  Vector alpha0;
  Vector alpha1;
  Vector alpha2;
  Vector rho;  // Bregman weights; only the BADMM solver reads them
  SimplexVector p0;
  SimplexVector q0;
  Regularizer reg = Regularizer::Entropic;

  static UotParams constant(std::size_t k_iters, double alpha0, double alpha1, double alpha2,
                            double rho, SimplexVector p0, SimplexVector q0,
                            Regularizer reg = Regularizer::Entropic) {
    return UotParams{k_iters,
                     Vector(k_iters, alpha0),
                     Vector(k_iters, alpha1),
                     Vector(k_iters, alpha2),
                     Vector(k_iters, rho),
                     std::move(p0),
                     std::move(q0),
                     reg};
  }

  /// Uniform priors for a D x N input.
  static UotParams uniform(std::size_t rows, std::size_t cols, std::size_t k_iters, double alpha0,
                           double alpha1, double alpha2, double rho,
                           Regularizer reg = Regularizer::Entropic) {
    return constant(k_iters, alpha0, alpha1, alpha2, rho, SimplexVector::uniform(rows),
                    SimplexVector::uniform(cols), reg);
  }

  void validate(std::size_t rows, std::size_t cols) const {
    if (k_iters == 0) throw std::invalid_argument("UotParams: k_iters must be positive");
    auto check = [&](const Vector& w, const char* name) {
      if (w.size() != k_iters) {
        throw std::invalid_argument(std::string("UotParams: ") + name + " must have k_iters entries");
      }
      for (double v : w) {
        if (!(v > 0.0) || !std::isfinite(v)) {
          throw std::invalid_argument(std::string("UotParams: ") + name +
                                      " entries must be finite and > 0");
        }
      }
    };
    check(alpha0, "alpha0");
    check(alpha1, "alpha1");
    check(alpha2, "alpha2");
    check(rho, "rho");
    if (p0.dim() != rows) {
      throw DimensionError("UotParams: p0 has dim " + std::to_string(p0.dim()) +
                           " but input has " + std::to_string(rows) + " rows");
    }
    if (q0.dim() != cols) {
      throw DimensionError("UotParams: q0 has dim " + std::to_string(q0.dim()) +
                           " but input has " + std::to_string(cols) + " columns");
    }
    if (!p0.strictly_positive() || !q0.strictly_positive()) {
      throw std::invalid_argument("UotParams: priors must be strictly positive");
    }
  }
};

struct TransportPlan {
  DenseMatrix plan;

  double total_mass() const noexcept {
    double total = 0.0;
    for (double v : plan.values()) total += std::abs(v);
    return total;
  }
};

struct SolverDiagnostics {
  bool has_nan = false;
  double total_mass = 0.0;
  Vector objective_trace;  // objective after each module, K entries
  double marginal_gap_row = 0.0;
  double marginal_gap_col = 0.0;
};

struct UotSolution {
  TransportPlan plan;
  SolverDiagnostics diagnostics;
};

namespace detail {

inline Vector log_of(std::span<const double> v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::log(v[i]);
  return out;
}

// Objective term by term; never throws, NaN/Inf propagate.
inline double objective_terms(const DenseMatrix& x, const DenseMatrix& p, double regularizer,
                              double alpha0, double alpha1, double alpha2, const SimplexVector& p0,
                              const SimplexVector& q0) {
  double transport = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) transport -= x.values()[i] * p.values()[i];
  auto kl = [](const Vector& a, std::span<const double> b) {
    double v = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      v += xlogy(a[i], a[i]) - xlogy(a[i], b[i]) - (a[i] - b[i]);
    }
    return v;
  };
  const double kl_row = kl(row_sums(p), p0.weights());
  const double kl_col = kl(col_sums(p), q0.weights());
  // zero weights switch a term off even when it is infinite
  auto weighted = [](double w, double term) { return w == 0.0 ? 0.0 : w * term; };
  return transport + weighted(alpha0, regularizer) + weighted(alpha1, kl_row) +
         weighted(alpha2, kl_col);
}

inline double regularizer_value(const DenseMatrix& p, Regularizer reg) {
  double r = 0.0;
  if (reg == Regularizer::Entropic) {
    for (double v : p.values()) r += xlogy(v, v) - v;
  } else {
    for (double v : p.values()) r += v * v;
  }
  return r;
}

// Objective of exp(log_p) using log_p directly for the entropy term.
inline double objective_from_log(const DenseMatrix& x, const DenseMatrix& log_p, double alpha0,
                                 double alpha1, double alpha2, const SimplexVector& p0,
                                 const SimplexVector& q0, Regularizer reg) {
  DenseMatrix p = log_p;
  for (double& v : p.values()) v = std::exp(v);
  double r = 0.0;
  if (reg == Regularizer::Entropic) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double v = p.values()[i];
      if (v != 0.0) r += v * (log_p.values()[i] - 1.0);
    }
  } else {
    for (double v : p.values()) r += v * v;
  }
  return objective_terms(x, p, r, alpha0, alpha1, alpha2, p0, q0);
}

inline SolverDiagnostics finish_diagnostics(const DenseMatrix& plan, Vector trace,
                                            const UotParams& params) {
  SolverDiagnostics d;
  d.objective_trace = std::move(trace);
  bool bad = !plan.all_finite();
  for (double v : d.objective_trace) bad = bad || !std::isfinite(v);
  d.has_nan = bad;
  double mass = 0.0;
  for (double v : plan.values()) mass += std::abs(v);
  d.total_mass = mass;
  const Vector rs = row_sums(plan);
  const Vector cs = col_sums(plan);
  for (std::size_t i = 0; i < rs.size(); ++i) d.marginal_gap_row += std::abs(rs[i] - params.p0[i]);
  for (std::size_t i = 0; i < cs.size(); ++i) d.marginal_gap_col += std::abs(cs[i] - params.q0[i]);
  return d;
}

inline void require_finite(const DenseMatrix& x, const char* what) {
  if (!x.all_finite()) throw std::invalid_argument(std::string(what) + " contains NaN or Inf");
}

}  // namespace detail

/// Objective value of a plan. Throws on NaN input, negative plan entries,
/// non-positive prior entries or shape mismatch.
inline double uot_objective(const DenseMatrix& x, const TransportPlan& plan, double alpha0,
                            double alpha1, double alpha2, const SimplexVector& p0,
                            const SimplexVector& q0, Regularizer reg) {
  const DenseMatrix& p = plan.plan;
  if (!x.same_shape(p)) throw DimensionError("uot_objective: X and P shapes differ");
  if (p0.dim() != x.rows() || q0.dim() != x.cols()) {
    throw DimensionError("uot_objective: prior dimensions do not match X");
  }
  detail::require_finite(x, "uot_objective: X");
  detail::require_finite(p, "uot_objective: P");
  for (double v : p.values()) {
    if (v < 0.0) throw std::invalid_argument("uot_objective: P has negative entries");
  }
  if (!p0.strictly_positive() || !q0.strictly_positive()) {
    throw std::invalid_argument("uot_objective: priors must be strictly positive");
  }
  for (double w : {alpha0, alpha1, alpha2}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("uot_objective: weights must be finite and >= 0");
    }
  }
  return detail::objective_terms(x, p, detail::regularizer_value(p, reg), alpha0, alpha1, alpha2,
                                 p0, q0);
}

// ---------------------------------------------------------------------------
// Sinkhorn scaling

/// Dual update rule of a Sinkhorn module.
///
/// Stabilized: both duals are kept in units of 1/alpha0 (so the log-kernel is
/// Y = X/alpha0 + a 1^T + 1 b^T), the row dual is refreshed first and the
/// column dual is computed from the refreshed kernel:
///   a <- alpha1/(alpha0+alpha1) * (a + log p0 - log p)
///   b <- alpha2/(alpha0+alpha2) * (b + log q0 - log q)
/// Literal: both marginals are read from the same kernel and the duals are
/// updated by alpha1 (a + alpha0 (log p0 - log p)) / (alpha0 (alpha0 + alpha1)),
/// which mixes units whenever alpha0 != 1.
enum class SinkhornRule { Stabilized, Literal };

struct SinkhornState {
  Vector a;
  Vector b;
  DenseMatrix y;

  static SinkhornState init(const DenseMatrix& x, double alpha0_first) {
    SinkhornState s{Vector(x.rows(), 0.0), Vector(x.cols(), 0.0), x};
    for (double& v : s.y.values()) v /= alpha0_first;
    return s;
  }
};

namespace detail {

inline void rebuild_kernel(const DenseMatrix& x, double alpha0, const Vector& a, const Vector& b,
                           DenseMatrix& y) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    auto yr = y.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) yr[c] = xr[c] / alpha0 + a[r] + b[c];
  }
}

}  // namespace detail

/// One Sinkhorn module in the log domain. The kernel is rebuilt with this
/// module's alpha0 before either marginal is read.
inline void sinkhorn_step(SinkhornState& state, const DenseMatrix& x, double alpha0,
                          double alpha1, double alpha2, const SimplexVector& p0,
                          const SimplexVector& q0, SinkhornRule rule = SinkhornRule::Stabilized) {
  Vector log_p;
  Vector log_q;
  if (rule == SinkhornRule::Stabilized) {
    detail::rebuild_kernel(x, alpha0, state.a, state.b, state.y);
    detail::logsumexp_rows_into(state.y, log_p);
    const double wa = alpha1 / (alpha0 + alpha1);
    for (std::size_t d = 0; d < state.a.size(); ++d) {
      state.a[d] = wa * (state.a[d] + std::log(p0[d]) - log_p[d]);
    }
    detail::rebuild_kernel(x, alpha0, state.a, state.b, state.y);
    detail::logsumexp_cols_into(state.y, log_q);
    const double wb = alpha2 / (alpha0 + alpha2);
    for (std::size_t n = 0; n < state.b.size(); ++n) {
      state.b[n] = wb * (state.b[n] + std::log(q0[n]) - log_q[n]);
    }
  } else {
    detail::rebuild_kernel(x, alpha0, state.a, state.b, state.y);
    detail::logsumexp_rows_into(state.y, log_p);
    detail::logsumexp_cols_into(state.y, log_q);
    for (std::size_t d = 0; d < state.a.size(); ++d) {
      state.a[d] = alpha1 * (state.a[d] + alpha0 * (std::log(p0[d]) - log_p[d])) /
                   (alpha0 * (alpha0 + alpha1));
    }
    for (std::size_t n = 0; n < state.b.size(); ++n) {
      state.b[n] = alpha2 * (state.b[n] + alpha0 * (std::log(q0[n]) - log_q[n])) /
                   (alpha0 * (alpha0 + alpha2));
    }
  }
  detail::rebuild_kernel(x, alpha0, state.a, state.b, state.y);
}

/// Sinkhorn-based solve: K modules, plan = exp(Y). Entropic regularizer only.
inline UotSolution sinkhorn_uot(const DenseMatrix& x, const UotParams& params,
                                SinkhornRule rule = SinkhornRule::Stabilized) {
  params.validate(x.rows(), x.cols());
  if (params.reg != Regularizer::Entropic) {
    throw std::invalid_argument("sinkhorn_uot supports only the entropic regularizer");
  }
  SinkhornState state = SinkhornState::init(x, params.alpha0[0]);
  Vector trace;
  trace.reserve(params.k_iters);
  for (std::size_t k = 0; k < params.k_iters; ++k) {
    sinkhorn_step(state, x, params.alpha0[k], params.alpha1[k], params.alpha2[k], params.p0,
                  params.q0, rule);
    trace.push_back(detail::objective_from_log(x, state.y, params.alpha0[k], params.alpha1[k],
                                               params.alpha2[k], params.p0, params.q0,
                                               Regularizer::Entropic));
  }
  DenseMatrix plan = std::move(state.y);
  for (double& v : plan.values()) v = std::exp(v);
  SolverDiagnostics diag = detail::finish_diagnostics(plan, std::move(trace), params);
  return {TransportPlan{std::move(plan)}, std::move(diag)};
}

// ---------------------------------------------------------------------------
// Bregman ADMM

/// Log-domain primal/auxiliary variables and duals of the BADMM splitting
/// P = S, P 1_N = mu, S^T 1_D = eta.
struct BadmmState {
  DenseMatrix log_p;
  DenseMatrix log_s;
  Vector log_mu;
  Vector log_eta;
  DenseMatrix z_mat;
  Vector z1;
  Vector z2;

  /// log P = log S = log(p0 q0^T), log mu = log p0, log eta = log q0, duals 0.
  static BadmmState init(const SimplexVector& p0, const SimplexVector& q0) {
    const std::size_t rows = p0.dim();
    const std::size_t cols = q0.dim();
    Vector log_p0 = detail::log_of(p0.weights());
    Vector log_q0 = detail::log_of(q0.weights());
    DenseMatrix log_pq(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) log_pq(r, c) = log_p0[r] + log_q0[c];
    }
    return BadmmState{log_pq,
                      log_pq,
                      std::move(log_p0),
                      std::move(log_q0),
                      DenseMatrix(rows, cols, 0.0),
                      Vector(rows, 0.0),
                      Vector(cols, 0.0)};
  }
};

/// Log-primal update: P^{k+1} = diag(mu^k) softmax_row(Y).
///   entropic:  Y = log S + (X - Z) / rho
///   quadratic: Y = log S + (X - alpha0 S - Z) / rho
inline void badmm_primal_update(BadmmState& state, const DenseMatrix& x, double alpha0,
                                double rho, Regularizer reg) {
  DenseMatrix y = state.log_s;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double drive = x.values()[i] - state.z_mat.values()[i];
    if (reg == Regularizer::Quadratic) drive -= alpha0 * std::exp(state.log_s.values()[i]);
    y.values()[i] += drive / rho;
  }
  Vector lse;
  detail::logsumexp_rows_into(y, lse);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    const double shift = state.log_mu[r] - lse[r];
    auto yr = y.row(r);
    for (double& v : yr) v += shift;
  }
  state.log_p = std::move(y);
}

/// Log-auxiliary update of S, mu and eta. S is projected onto columns summing
/// to eta^k, so it must run before eta is refreshed.
///   entropic:  Y = (Z + rho log P) / (alpha0 + rho)
///   quadratic: Y = log P + (Z - alpha0 S^k) / rho
inline void badmm_auxiliary_update(BadmmState& state, double alpha0, double alpha1, double alpha2,
                                   double rho, const SimplexVector& p0, const SimplexVector& q0,
                                   Regularizer reg) {
  DenseMatrix y = state.log_p;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double z = state.z_mat.values()[i];
    const double lp = state.log_p.values()[i];
    if (reg == Regularizer::Entropic) {
      y.values()[i] = (z + rho * lp) / (alpha0 + rho);
    } else {
      y.values()[i] = lp + (z - alpha0 * std::exp(state.log_s.values()[i])) / rho;
    }
  }
  Vector lse;
  detail::logsumexp_cols_into(y, lse);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto yr = y.row(r);
    for (std::size_t c = 0; c < y.cols(); ++c) yr[c] += state.log_eta[c] - lse[c];
  }
  state.log_s = std::move(y);

  for (std::size_t d = 0; d < state.log_mu.size(); ++d) {
    state.log_mu[d] = (rho * state.log_mu[d] + alpha1 * std::log(p0[d]) - state.z1[d]) /
                      (rho + alpha1);
  }
  for (std::size_t n = 0; n < state.log_eta.size(); ++n) {
    state.log_eta[n] = (rho * state.log_eta[n] + alpha2 * std::log(q0[n]) - state.z2[n]) /
                       (rho + alpha2);
  }
}

/// Dual ascent: Z += alpha0 (P - S), z1 += rho (mu - P 1_N), z2 += rho (eta - S^T 1_D).
inline void badmm_dual_update(BadmmState& state, double alpha0, double rho) {
  const std::size_t rows = state.log_p.rows();
  const std::size_t cols = state.log_p.cols();
  Vector p_rows(rows, 0.0);
  Vector s_cols(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = std::exp(state.log_p(r, c));
      const double s = std::exp(state.log_s(r, c));
      state.z_mat(r, c) += alpha0 * (p - s);
      p_rows[r] += p;
      s_cols[c] += s;
    }
  }
  for (std::size_t d = 0; d < rows; ++d) state.z1[d] += rho * (std::exp(state.log_mu[d]) - p_rows[d]);
  for (std::size_t n = 0; n < cols; ++n) state.z2[n] += rho * (std::exp(state.log_eta[n]) - s_cols[n]);
}

/// BADMM-based solve: K modules of primal, auxiliary and dual updates,
/// plan = exp(log P^K).
inline UotSolution badmm_uot(const DenseMatrix& x, const UotParams& params) {
  params.validate(x.rows(), x.cols());
  BadmmState state = BadmmState::init(params.p0, params.q0);
  Vector trace;
  trace.reserve(params.k_iters);
  for (std::size_t k = 0; k < params.k_iters; ++k) {
    const double a0 = params.alpha0[k];
    const double rho = params.rho[k];
    badmm_primal_update(state, x, a0, rho, params.reg);
    badmm_auxiliary_update(state, a0, params.alpha1[k], params.alpha2[k], rho, params.p0,
                           params.q0, params.reg);
    badmm_dual_update(state, a0, rho);
    trace.push_back(detail::objective_from_log(x, state.log_p, a0, params.alpha1[k],
                                               params.alpha2[k], params.p0, params.q0,
                                               params.reg));
  }
  DenseMatrix plan = std::move(state.log_p);
  for (double& v : plan.values()) v = std::exp(v);
  SolverDiagnostics diag = detail::finish_diagnostics(plan, std::move(trace), params);
  return {TransportPlan{std::move(plan)}, std::move(diag)};
}

inline UotSolution solve_uot(const DenseMatrix& x, const UotParams& params, Solver solver) {
  return solver == Solver::Sinkhorn ? sinkhorn_uot(x, params) : badmm_uot(x, params);
}

}  // namespace uotpool
