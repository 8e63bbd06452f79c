#pragma once

// Global pooling operators. Every operator maps a D x N matrix (columns are
// samples) to a D-vector. The UOT pooling reads a transport plan and returns
// the per-dimension conditional expectation of X under it; the reference
// poolings (mean, max, attention, mixed) are the special cases it covers.

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "uotpool/core_numerics.hpp"
#include "uotpool/uot_solvers.hpp"

namespace uotpool {

struct PooledVector {
  Vector values;

  std::size_t dim() const noexcept { return values.size(); }
  double operator[](std::size_t i) const noexcept { return values[i]; }
};

/// Attention-pooling parameters: a_X = softmax(w^T tanh(V X)). The optional
/// U parameterizes a learned row prior p0 = softmax(U X 1_N).
struct AttentionParams {
  DenseMatrix v_mat;
  Vector w_vec;
  std::optional<DenseMatrix> u_mat;

  static AttentionParams zeros(std::size_t dim, bool with_u = false) {
    AttentionParams p{DenseMatrix(dim, dim, 0.0), Vector(dim, 0.0), std::nullopt};
    if (with_u) p.u_mat = DenseMatrix(dim, dim, 0.0);
    return p;
  }

  void validate(std::size_t dim) const {
    if (v_mat.rows() != dim || v_mat.cols() != dim || w_vec.size() != dim) {
      throw DimensionError("AttentionParams: V must be " + std::to_string(dim) + "x" +
                           std::to_string(dim) + " and w must have " + std::to_string(dim) +
                           " entries");
    }
    if (u_mat && (u_mat->rows() != dim || u_mat->cols() != dim)) {
      throw DimensionError("AttentionParams: U must be " + std::to_string(dim) + "x" +
                           std::to_string(dim));
    }
  }
};

/// Gate of the gated mean-max pooling: omega = sigmoid(u^T mean_pool(X) + c).
struct GateParams {
  Vector u_vec;
  double bias = 0.0;
};

/// f(X) = (X .* diag^{-1}(P 1_N) P) 1_N
inline PooledVector pool_with_plan(const DenseMatrix& x, const TransportPlan& plan) {
  if (!x.same_shape(plan.plan)) throw DimensionError("pool_with_plan: X and P shapes differ");
  const DenseMatrix cond = row_conditional(plan.plan);
  PooledVector out{Vector(x.rows(), 0.0)};
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    auto cr = cond.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) acc += xr[c] * cr[c];
    out.values[r] = acc;
  }
  return out;
}

inline PooledVector mean_pool(const DenseMatrix& x) {
  PooledVector out{Vector(x.rows(), 0.0)};
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double acc = 0.0;
    for (double v : x.row(r)) acc += v;
    out.values[r] = acc / static_cast<double>(x.cols());
  }
  return out;
}

struct MaxPoolResult {
  PooledVector pooled;
  std::vector<std::size_t> argmax;  // ties resolve to the lowest column
};

inline MaxPoolResult max_pool_with_argmax(const DenseMatrix& x) {
  MaxPoolResult out{PooledVector{Vector(x.rows())}, std::vector<std::size_t>(x.rows(), 0)};
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < xr.size(); ++c) {
      if (xr[c] > xr[best]) best = c;
    }
    out.argmax[r] = best;
    out.pooled.values[r] = xr[best];
  }
  return out;
}

inline PooledVector max_pool(const DenseMatrix& x) { return max_pool_with_argmax(x).pooled; }

/// a_X = softmax(w^T tanh(V X)), one weight per sample.
inline SimplexVector attention_weights(const DenseMatrix& x, const AttentionParams& params) {
  params.validate(x.rows());
  const std::size_t dim = x.rows();
  Vector logits(x.cols(), 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    if (params.w_vec[i] == 0.0) continue;
    auto vi = params.v_mat.row(i);
    for (std::size_t n = 0; n < x.cols(); ++n) {
      double h = 0.0;
      for (std::size_t j = 0; j < dim; ++j) h += vi[j] * x(j, n);
      logits[n] += params.w_vec[i] * std::tanh(h);
    }
  }
  return softmax(logits);
}

/// f(X) = X a
inline PooledVector weighted_pool(const DenseMatrix& x, const SimplexVector& weights) {
  if (weights.dim() != x.cols()) throw DimensionError("weighted_pool: weight dim != N");
  PooledVector out{Vector(x.rows(), 0.0)};
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) acc += xr[c] * weights[c];
    out.values[r] = acc;
  }
  return out;
}

inline PooledVector attention_pool(const DenseMatrix& x, const AttentionParams& params) {
  return weighted_pool(x, attention_weights(x, params));
}

/// omega * mean + (1 - omega) * max
inline PooledVector mixed_pool(const DenseMatrix& x, double omega) {
  if (!(omega >= 0.0 && omega <= 1.0)) {
    throw std::invalid_argument("mixed_pool: omega must lie in [0, 1]");
  }
  PooledVector mean = mean_pool(x);
  const PooledVector max = max_pool(x);
  for (std::size_t r = 0; r < mean.dim(); ++r) {
    mean.values[r] = omega * mean.values[r] + (1.0 - omega) * max.values[r];
  }
  return mean;
}

inline double gate_value(const DenseMatrix& x, const GateParams& gate) {
  if (gate.u_vec.size() != x.rows()) throw DimensionError("gated pooling: u has wrong length");
  const PooledVector mean = mean_pool(x);
  double logit = gate.bias;
  for (std::size_t r = 0; r < x.rows(); ++r) logit += gate.u_vec[r] * mean.values[r];
  return sigmoid(logit);
}

inline PooledVector gated_mean_max_pool(const DenseMatrix& x, const GateParams& gate) {
  return mixed_pool(x, gate_value(x, gate));
}

struct UotPoolResult {
  PooledVector pooled;
  SolverDiagnostics diagnostics;
};

/// Solves for the plan and pools with it. A plan with a dead row raises
/// DegenerateRowError rather than returning a silently repaired result.
inline UotPoolResult uot_pool(const DenseMatrix& x, const UotParams& params, Solver solver) {
  UotSolution sol = solve_uot(x, params, solver);
  PooledVector pooled = pool_with_plan(x, sol.plan);
  return {std::move(pooled), std::move(sol.diagnostics)};
}

// Finite surrogates for the limiting weights of the reference configurations.
inline constexpr double kLargeWeight = 1e4;
inline constexpr double kSmallWeight = 1e-2;

/// Weights -> large with uniform priors: reproduces mean pooling.
inline UotParams mean_config(std::size_t rows, std::size_t cols, std::size_t k_iters,
                             Regularizer reg = Regularizer::Entropic) {
  return UotParams::uniform(rows, cols, k_iters, kLargeWeight, kLargeWeight, kLargeWeight,
                            kLargeWeight, reg);
}

/// alpha0, alpha2 -> small, alpha1 -> large: reproduces max pooling. The
/// column prior is uniform and carries (almost) no weight.
inline UotParams max_config(std::size_t rows, std::size_t cols, std::size_t k_iters,
                            Regularizer reg = Regularizer::Entropic) {
  return UotParams::uniform(rows, cols, k_iters, kSmallWeight, kLargeWeight, kSmallWeight,
                            kSmallWeight, reg);
}

/// Weights -> large with column prior a: reproduces attention pooling X a.
inline UotParams attention_config(std::size_t rows, const SimplexVector& attention,
                                  std::size_t k_iters, Regularizer reg = Regularizer::Entropic) {
  return UotParams::constant(k_iters, kLargeWeight, kLargeWeight, kLargeWeight, kLargeWeight,
                             SimplexVector::uniform(rows), attention, reg);
}

/// Solver used for each stage of the hierarchical pooling.
struct HierarchySolvers {
  Solver mean_stage;
  Solver max_stage;
  Solver mix_stage;

  static HierarchySolvers all(Solver s) { return {s, s, s}; }
  /// Each stage on the solver that reproduces its target most closely:
  /// Sinkhorn for the sharp max plan, BADMM where a marginal must be matched.
  static HierarchySolvers recommended() { return {Solver::Badmm, Solver::Sinkhorn, Solver::Badmm}; }
};

/// Mixed mean-max pooling as a composition of three UOT poolings: the mean
/// and max configurations pool X into a D x 2 matrix, which is then pooled
/// with column prior [omega, 1 - omega].
inline PooledVector hierarchical_uot_pool(const DenseMatrix& x, double omega,
                                          HierarchySolvers solvers, std::size_t k_iters) {
  if (!(omega > 0.0 && omega < 1.0)) {
    throw std::invalid_argument("hierarchical_uot_pool: omega must lie in (0, 1)");
  }
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  const PooledVector mean = uot_pool(x, mean_config(rows, cols, k_iters), solvers.mean_stage).pooled;
  const PooledVector max = uot_pool(x, max_config(rows, cols, k_iters), solvers.max_stage).pooled;
  DenseMatrix stacked(rows, 2);
  for (std::size_t r = 0; r < rows; ++r) {
    stacked(r, 0) = mean.values[r];
    stacked(r, 1) = max.values[r];
  }
  const SimplexVector mix({omega, 1.0 - omega});
  return uot_pool(stacked, attention_config(rows, mix, k_iters), solvers.mix_stage).pooled;
}

inline PooledVector hierarchical_uot_pool(const DenseMatrix& x, double omega, Solver solver,
                                          std::size_t k_iters) {
  return hierarchical_uot_pool(x, omega, HierarchySolvers::all(solver), k_iters);
}

// ---------------------------------------------------------------------------
// Operator selection

namespace pooling {
struct Mean {};
struct Max {};
struct Attention {
  AttentionParams params;
};
struct MixedMeanMax {
  double omega;
};
struct GatedMeanMax {
  GateParams gate;
};
struct UotSinkhorn {
  UotParams params;
};
struct UotBadmm {
  UotParams params;
};
struct HierarchicalUot {
  double omega;
  HierarchySolvers solvers = HierarchySolvers::recommended();
  std::size_t k_iters = 32;
};
}  // namespace pooling

using PoolingSpec =
    std::variant<pooling::Mean, pooling::Max, pooling::Attention, pooling::MixedMeanMax,
                 pooling::GatedMeanMax, pooling::UotSinkhorn, pooling::UotBadmm,
                 pooling::HierarchicalUot>;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline PooledVector pool(const DenseMatrix& x, const PoolingSpec& spec) {
  return std::visit(
      overloaded{
          [&](const pooling::Mean&) { return mean_pool(x); },
          [&](const pooling::Max&) { return max_pool(x); },
          [&](const pooling::Attention& s) { return attention_pool(x, s.params); },
          [&](const pooling::MixedMeanMax& s) { return mixed_pool(x, s.omega); },
          [&](const pooling::GatedMeanMax& s) { return gated_mean_max_pool(x, s.gate); },
          [&](const pooling::UotSinkhorn& s) { return uot_pool(x, s.params, Solver::Sinkhorn).pooled; },
          [&](const pooling::UotBadmm& s) { return uot_pool(x, s.params, Solver::Badmm).pooled; },
          [&](const pooling::HierarchicalUot& s) {
            return hierarchical_uot_pool(x, s.omega, s.solvers, s.k_iters);
          },
      },
      spec);
}

}  // namespace uotpool
