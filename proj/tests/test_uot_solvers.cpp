#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "uotpool/uot_solvers.hpp"
#include "support/oracles.hpp"

using namespace uotpool;
using oracle::BadmmOracle;
using oracle::Grid;
using oracle::SinkhornOracle;

namespace {

DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = 0.0,
                          double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  DenseMatrix m(rows, cols);
  for (double& v : m.values()) v = u(rng);
  return m;
}

SimplexVector random_simplex(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Vector w(n);
  for (double& v : w) v = u(rng);
  return SimplexVector::normalized(w);
}

void expect_grid_near(const Grid& ref, const DenseMatrix& log_m, double tol, const char* what) {
  for (std::size_t i = 0; i < ref.size(); ++i) {
    for (std::size_t j = 0; j < ref[i].size(); ++j) {
      EXPECT_NEAR(std::exp(log_m(i, j)), ref[i][j], tol) << what << " (" << i << "," << j << ")";
    }
  }
}

void expect_plain_near(const Grid& ref, const DenseMatrix& m, double tol, const char* what) {
  for (std::size_t i = 0; i < ref.size(); ++i) {
    for (std::size_t j = 0; j < ref[i].size(); ++j) {
      EXPECT_NEAR(m(i, j), ref[i][j], tol) << what << " (" << i << "," << j << ")";
    }
  }
}

void expect_vec_near(const Vector& ref, const Vector& got, bool log_domain, double tol,
                     const char* what) {
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_NEAR(log_domain ? std::exp(got[i]) : got[i], ref[i], tol) << what << " [" << i << "]";
  }
}

void run_badmm_oracle(std::size_t rows, std::size_t cols, Regularizer reg, std::uint64_t seed) {
  const DenseMatrix x = random_matrix(rows, cols, seed);
  const SimplexVector p0 = random_simplex(rows, seed + 1);
  const SimplexVector q0 = random_simplex(cols, seed + 2);
  BadmmState st = BadmmState::init(p0, q0);
  BadmmOracle ref(st);
  const double a0s[] = {0.7, 0.3, 1.5};
  const double a1s[] = {2.0, 0.5, 1.0};
  const double a2s[] = {0.4, 3.0, 1.0};
  const double rhos[] = {1.3, 0.8, 2.0};
  for (int k = 0; k < 3; ++k) {
    badmm_primal_update(st, x, a0s[k], rhos[k], reg);
    ref.primal(x, a0s[k], rhos[k], reg);
    expect_grid_near(ref.p, st.log_p, 1e-10, "P");

    badmm_auxiliary_update(st, a0s[k], a1s[k], a2s[k], rhos[k], p0, q0, reg);
    ref.auxiliary(a0s[k], a1s[k], a2s[k], rhos[k], p0, q0, reg);
    expect_grid_near(ref.s, st.log_s, 1e-10, "S");
    expect_vec_near(ref.mu, st.log_mu, true, 1e-10, "mu");
    expect_vec_near(ref.eta, st.log_eta, true, 1e-10, "eta");

    badmm_dual_update(st, a0s[k], rhos[k]);
    ref.dual(a0s[k], rhos[k]);
    expect_plain_near(ref.z, st.z_mat, 1e-10, "Z");
    expect_vec_near(ref.z1, st.z1, false, 1e-10, "z1");
    expect_vec_near(ref.z2, st.z2, false, 1e-10, "z2");
  }
}

void run_sinkhorn_oracle(SinkhornRule rule, std::uint64_t seed) {
  const DenseMatrix x = random_matrix(3, 4, seed);
  const SimplexVector p0 = random_simplex(3, seed + 1);
  const SimplexVector q0 = random_simplex(4, seed + 2);
  const double a0s[] = {1.0, 0.5, 2.0, 0.8};
  const double a1s[] = {1.0, 3.0, 0.7, 1.2};
  const double a2s[] = {2.0, 0.4, 1.0, 1.1};
  SinkhornState st = SinkhornState::init(x, a0s[0]);
  SinkhornOracle ref{Vector(3, 1.0), Vector(4, 1.0)};
  for (int k = 0; k < 4; ++k) {
    sinkhorn_step(st, x, a0s[k], a1s[k], a2s[k], p0, q0, rule);
    ref.step(x, a0s[k], a1s[k], a2s[k], p0, q0, rule);
    const Grid g = ref.plan(x, a0s[k]);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_NEAR(std::exp(st.y(i, j)), g[i][j], 1e-8 * std::max(1.0, g[i][j])) << "k=" << k;
      }
    }
  }
}

UotParams weights(std::size_t rows, std::size_t cols, std::size_t k, double a0, double a12,
                  double rho, Regularizer reg = Regularizer::Entropic) {
  return UotParams::uniform(rows, cols, k, a0, a12, a12, rho, reg);
}

DenseMatrix permute_cols(const DenseMatrix& m, const std::vector<std::size_t>& perm) {
  DenseMatrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, perm[j]);
  }
  return out;
}

// Objective along the constant plan t 1 1^T with X = 0 and uniform priors.
double constant_plan_objective(double t, double rows, double cols, double a) {
  const double n = rows * cols;
  const double entropy = n * (t * std::log(t) - t);
  const double r = cols * t;  // row sums
  const double c = rows * t;  // column sums
  const double kl_rows = rows * (r * std::log(r * rows) - r + 1.0 / rows);
  const double kl_cols = cols * (c * std::log(c * cols) - c + 1.0 / cols);
  return a * (entropy + kl_rows + kl_cols);
}

double golden_section_min(double lo, double hi, const std::function<double(double)>& f) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  for (int i = 0; i < 200; ++i) {
    const double c = b - g * (b - a);
    const double d = a + g * (b - a);
    if (f(c) < f(d)) b = d; else a = c;
  }
  return 0.5 * (a + b);
}

}  // namespace

// ---------------------------------------------------------------------------
// Objective

TEST(UotObjective, Examples) {
  const DenseMatrix x(2, 2, 1.0);
  const TransportPlan p{DenseMatrix(2, 2, 0.25)};
  const SimplexVector u2 = SimplexVector::uniform(2);
  EXPECT_NEAR(uot_objective(x, p, 1, 1, 1, u2, u2, Regularizer::Entropic),
              -1.0 + (std::log(0.25) - 1.0), 1e-14);
  EXPECT_NEAR(uot_objective(x, p, 1, 1, 1, u2, u2, Regularizer::Entropic), -3.386294, 1e-6);
  EXPECT_NEAR(uot_objective(x, p, 1, 1, 1, u2, u2, Regularizer::Quadratic), -0.75, 1e-14);
  const TransportPlan q{DenseMatrix{{0.1, 0.4}, {0.3, 0.2}}};
  EXPECT_EQ(uot_objective(DenseMatrix(2, 2, 0.0), q, 0, 0, 0, u2, u2, Regularizer::Entropic), 0.0);
}

TEST(UotObjective, RejectsBadInputs) {
  const SimplexVector u2 = SimplexVector::uniform(2);
  const TransportPlan p{DenseMatrix(2, 2, 0.25)};
  DenseMatrix x(2, 2, 0.0);
  x(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(uot_objective(x, p, 1, 1, 1, u2, u2, Regularizer::Entropic), std::invalid_argument);
  const SimplexVector zero_prior(Vector{0.0, 1.0});
  EXPECT_THROW(uot_objective(DenseMatrix(2, 2), p, 1, 1, 1, zero_prior, u2, Regularizer::Entropic),
               std::invalid_argument);
  EXPECT_THROW(uot_objective(DenseMatrix(2, 3), p, 1, 1, 1, u2, u2, Regularizer::Entropic),
               DimensionError);
}

// ---------------------------------------------------------------------------
// Params

TEST(UotParams, Validation) {
  const DenseMatrix x(2, 3, 0.5);
  UotParams ok = weights(2, 3, 4, 1, 1, 1);
  EXPECT_NO_THROW(ok.validate(2, 3));
  EXPECT_THROW(ok.validate(3, 3), DimensionError);
  UotParams bad = ok;
  bad.alpha1[2] = 0.0;
  EXPECT_THROW(badmm_uot(x, bad), std::invalid_argument);
  bad = ok;
  bad.rho.pop_back();
  EXPECT_THROW(badmm_uot(x, bad), std::invalid_argument);
  bad = ok;
  bad.k_iters = 0;
  EXPECT_THROW(sinkhorn_uot(x, bad), std::invalid_argument);
  EXPECT_THROW(sinkhorn_uot(x, weights(2, 3, 4, 1, 1, 1, Regularizer::Quadratic)),
               std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Step-level oracles

TEST(BadmmOracle, Entropic2x2) { run_badmm_oracle(2, 2, Regularizer::Entropic, 21); }
TEST(BadmmOracle, Entropic3x4) { run_badmm_oracle(3, 4, Regularizer::Entropic, 22); }
TEST(BadmmOracle, Quadratic2x2) { run_badmm_oracle(2, 2, Regularizer::Quadratic, 23); }
TEST(BadmmOracle, Quadratic3x4) { run_badmm_oracle(3, 4, Regularizer::Quadratic, 24); }

TEST(SinkhornOracle, StabilizedMatchesDirectForm) {
  run_sinkhorn_oracle(SinkhornRule::Stabilized, 31);
  run_sinkhorn_oracle(SinkhornRule::Stabilized, 32);
}

TEST(SinkhornOracle, LiteralMatchesDirectForm) {
  run_sinkhorn_oracle(SinkhornRule::Literal, 33);
  run_sinkhorn_oracle(SinkhornRule::Literal, 34);
}

// ---------------------------------------------------------------------------
// BADMM update examples

TEST(BadmmPrimal, ZeroCostKeepsInitialization) {
  const SimplexVector p0 = SimplexVector::uniform(3);
  const SimplexVector q0 = SimplexVector::uniform(4);
  BadmmState st = BadmmState::init(p0, q0);
  const DenseMatrix init = st.log_p;
  badmm_primal_update(st, DenseMatrix(3, 4, 0.0), 1.0, 1.0, Regularizer::Entropic);
  for (std::size_t i = 0; i < init.size(); ++i) EXPECT_NEAR(st.log_p.values()[i], init.values()[i], 1e-14);
}

TEST(BadmmPrimal, RowProjection2x2) {
  const SimplexVector u = SimplexVector::uniform(2);
  BadmmState st = BadmmState::init(u, u);
  const DenseMatrix x{{1.0, 0.0}, {0.0, 1.0}};
  badmm_primal_update(st, x, 1.0, 1.0, Regularizer::Entropic);
  DenseMatrix p = st.log_p;
  for (double& v : p.values()) v = std::exp(v);
  for (double s : row_sums(p)) EXPECT_NEAR(s, 0.5, 1e-12);
  // independent evaluation: row i weights 0.25 e^{X_ij}, rescaled to mass 1/2
  const double e = std::exp(1.0);
  EXPECT_NEAR(p(0, 0), 0.5 * e / (e + 1.0), 1e-14);
  EXPECT_NEAR(p(0, 1), 0.5 / (e + 1.0), 1e-14);
  EXPECT_NEAR(p(1, 1), 0.5 * e / (e + 1.0), 1e-14);
}

TEST(BadmmAuxiliary, MuFixedPointAndWeightLimit) {
  const SimplexVector p0 = random_simplex(3, 41);
  const SimplexVector q0 = random_simplex(4, 42);
  BadmmState st = BadmmState::init(p0, q0);
  badmm_auxiliary_update(st, 1.0, 2.0, 2.0, 1.0, p0, q0, Regularizer::Entropic);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(st.log_mu[i], std::log(p0[i]), 1e-14);

  BadmmState moved = BadmmState::init(p0, q0);
  moved.log_mu = {-0.3, -2.0, -1.1};
  const Vector before = moved.log_mu;
  badmm_auxiliary_update(moved, 1.0, 1e-9, 1.0, 1.0, p0, q0, Regularizer::Entropic);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(moved.log_mu[i], before[i], 1e-8);
}

TEST(BadmmDual, ConsensusLeavesDualsUnchanged) {
  const SimplexVector p0 = random_simplex(3, 43);
  const SimplexVector q0 = random_simplex(2, 44);
  BadmmState st = BadmmState::init(p0, q0);
  st.z_mat(1, 1) = 0.7;
  st.z1 = {0.1, -0.2, 0.3};
  st.z2 = {0.5, -0.5};
  const BadmmState before = st;
  badmm_dual_update(st, 2.0, 3.0);
  for (std::size_t i = 0; i < st.z_mat.size(); ++i) {
    EXPECT_NEAR(st.z_mat.values()[i], before.z_mat.values()[i], 1e-15);
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(st.z1[i], before.z1[i], 1e-15);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(st.z2[i], before.z2[i], 1e-15);
}

TEST(BadmmDual, SingleAdditiveStep) {
  const SimplexVector u = SimplexVector::uniform(2);
  BadmmState st = BadmmState::init(u, u);
  st.log_p = DenseMatrix{{std::log(0.35), std::log(0.15)}, {std::log(0.25), std::log(0.25)}};
  // S = P - [[0.1, -0.1], [0, 0]]
  st.log_s = DenseMatrix{{std::log(0.25), std::log(0.25)}, {std::log(0.25), std::log(0.25)}};
  badmm_dual_update(st, 1.0, 1.0);
  EXPECT_NEAR(st.z_mat(0, 0), 0.1, 1e-15);
  EXPECT_NEAR(st.z_mat(0, 1), -0.1, 1e-15);
  EXPECT_NEAR(st.z_mat(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(st.z_mat(1, 1), 0.0, 1e-15);
}

TEST(BadmmProjection, ConstraintsHoldAfterEveryUpdate) {
  const DenseMatrix x = random_matrix(5, 10, 51);
  const SimplexVector p0 = random_simplex(5, 52);
  const SimplexVector q0 = random_simplex(10, 53);
  for (Regularizer reg : {Regularizer::Entropic, Regularizer::Quadratic}) {
    BadmmState st = BadmmState::init(p0, q0);
    for (int k = 0; k < 16; ++k) {
      badmm_primal_update(st, x, 0.5, 1.0, reg);
      DenseMatrix p = st.log_p;
      for (double& v : p.values()) v = std::exp(v);
      const Vector rs = row_sums(p);
      for (std::size_t i = 0; i < rs.size(); ++i) ASSERT_NEAR(rs[i], std::exp(st.log_mu[i]), 1e-10);
      const Vector eta = st.log_eta;
      badmm_auxiliary_update(st, 0.5, 1.0, 1.0, 1.0, p0, q0, reg);
      DenseMatrix s = st.log_s;
      for (double& v : s.values()) v = std::exp(v);
      const Vector cs = col_sums(s);
      for (std::size_t j = 0; j < cs.size(); ++j) ASSERT_NEAR(cs[j], std::exp(eta[j]), 1e-10);
      badmm_dual_update(st, 0.5, 1.0);
    }
  }
}

// ---------------------------------------------------------------------------
// Full solves

TEST(SinkhornUot, TraceLengthAndFiniteness) {
  const DenseMatrix x = random_matrix(5, 10, 61);
  const UotSolution sol = sinkhorn_uot(x, weights(5, 10, 7, 1.0, 1.0, 1.0));
  EXPECT_EQ(sol.diagnostics.objective_trace.size(), 7u);
  EXPECT_FALSE(sol.diagnostics.has_nan);
  EXPECT_GT(sol.diagnostics.total_mass, 0.0);
}

TEST(SinkhornUot, ZeroCostConvergesToDerivedOptimum) {
  // With X = 0 and equal weights the optimum is the constant plan
  // t* = (DN)^{-2/3}; an independent 1-d minimization confirms the value.
  const double rows = 5, cols = 10;
  const double closed_form = std::pow(rows * cols, -2.0 / 3.0);
  const double searched = golden_section_min(
      1e-4, 1.0, [&](double t) { return constant_plan_objective(t, rows, cols, 1.0); });
  EXPECT_NEAR(searched, closed_form, 1e-7);
  const UotSolution sol = sinkhorn_uot(DenseMatrix(5, 10, 0.0), weights(5, 10, 400, 1.0, 1.0, 1.0));
  for (double v : sol.plan.plan.values()) EXPECT_NEAR(v, closed_form, 1e-8);
  // ... which is not the mean plan 1/(DN) for any common weight value
  EXPECT_GT(std::abs(closed_form - 1.0 / 50.0), 0.05);
}

TEST(SinkhornUot, MaxConfigurationSmallExample) {
  const DenseMatrix x{{1.0, 3.0, 2.0}, {5.0, 4.0, 6.0}};
  const UotParams params = UotParams::uniform(2, 3, 32, 0.01, 1e4, 0.01, 0.01);
  const UotSolution sol = sinkhorn_uot(x, params);
  const DenseMatrix expected{{0.0, 0.5, 0.0}, {0.0, 0.0, 0.5}};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_NEAR(sol.plan.plan.values()[i], expected.values()[i], 0.02);
  }
}

TEST(SinkhornUot, TinyWeightsProduceNaN) {
  const DenseMatrix x = random_matrix(5, 10, 62);
  const UotSolution sol = sinkhorn_uot(x, weights(5, 10, 4, 1e-5, 1e-5, 1.0));
  EXPECT_TRUE(sol.diagnostics.has_nan);
}

TEST(SinkhornUot, NeverThrowsOnOverflow) {
  DenseMatrix x = random_matrix(4, 6, 63, 0.0, 1e3);
  EXPECT_NO_THROW(sinkhorn_uot(x, weights(4, 6, 4, 1e-5, 1e4, 1.0)));
}

TEST(BadmmUot, MeanConfigurationPlan) {
  const DenseMatrix x = random_matrix(5, 10, 71);
  const UotSolution sol = badmm_uot(x, weights(5, 10, 32, 1e4, 1e4, 1e4));
  for (double v : sol.plan.plan.values()) EXPECT_NEAR(v, 1.0 / 50.0, 1e-3);
}

TEST(BadmmUot, AttentionConfigurationPlan) {
  const DenseMatrix x = random_matrix(5, 10, 72);
  const SimplexVector a = random_simplex(10, 73);
  const UotParams params =
      UotParams::constant(32, 1e4, 1e4, 1e4, 1e4, SimplexVector::uniform(5), a);
  const UotSolution sol = badmm_uot(x, params);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 10; ++j) EXPECT_NEAR(sol.plan.plan(i, j), a[j] / 5.0, 1e-2);
  }
}

TEST(BadmmUot, StableAcrossExtremeWeights) {
  const DenseMatrix x = random_matrix(5, 10, 74);
  for (Regularizer reg : {Regularizer::Entropic, Regularizer::Quadratic}) {
    for (double a0 : {1e-5, 1.0, 1e4}) {
      for (double a12 : {1e-5, 1.0, 1e4}) {
        const UotSolution sol = badmm_uot(x, weights(5, 10, 4, a0, a12, 1.0, reg));
        EXPECT_FALSE(sol.diagnostics.has_nan) << a0 << " " << a12;
        EXPECT_NEAR(sol.diagnostics.total_mass, 1.0, 0.1) << a0 << " " << a12;
      }
    }
  }
}

TEST(BadmmUot, MarginalTightening) {
  const DenseMatrix x = random_matrix(5, 10, 75);
  const SimplexVector p0 = random_simplex(5, 76);
  for (Regularizer reg : {Regularizer::Entropic, Regularizer::Quadratic}) {
    double prev = std::numeric_limits<double>::infinity();
    for (double a : {1.0, 10.0, 100.0, 1e4}) {
      const UotParams params =
          UotParams::constant(32, 1.0, a, a, 1.0, p0, SimplexVector::uniform(10), reg);
      const double gap = badmm_uot(x, params).diagnostics.marginal_gap_row;
      EXPECT_LE(gap, prev + 1e-6) << to_string(reg) << " alpha=" << a;
      prev = gap;
    }
  }
}

TEST(BadmmUot, ObjectiveNonincreasingInK) {
  const DenseMatrix x = random_matrix(5, 10, 77);
  for (Regularizer reg : {Regularizer::Entropic, Regularizer::Quadratic}) {
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t k : {1u, 2u, 4u, 8u, 16u}) {
      const UotParams params = weights(5, 10, k, 0.1, 1.0, 1.0, reg);
      const UotSolution sol = badmm_uot(x, params);
      const double obj = uot_objective(x, sol.plan, 0.1, 1.0, 1.0, params.p0, params.q0, reg);
      EXPECT_LE(obj, prev + 1e-6) << to_string(reg) << " K=" << k;
      prev = obj;
    }
  }
}

TEST(Solvers, PermutationEquivariance) {
  std::mt19937_64 rng(81);
  for (int trial = 0; trial < 20; ++trial) {
    const DenseMatrix x = random_matrix(4, 7, 100 + trial);
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const DenseMatrix xp = permute_cols(x, perm);
    struct Case {
      Solver solver;
      Regularizer reg;
    };
    for (Case c : {Case{Solver::Sinkhorn, Regularizer::Entropic},
                   Case{Solver::Badmm, Regularizer::Entropic},
                   Case{Solver::Badmm, Regularizer::Quadratic}}) {
      const UotParams params = weights(4, 7, 8, 0.5, 1.0, 1.0, c.reg);
      const DenseMatrix a = permute_cols(solve_uot(x, params, c.solver).plan.plan, perm);
      const DenseMatrix b = solve_uot(xp, params, c.solver).plan.plan;
      for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(a.values()[i], b.values()[i], 1e-9);
      }
    }
  }
}

TEST(Solvers, Deterministic) {
  const DenseMatrix x = random_matrix(5, 10, 91);
  for (Solver s : {Solver::Sinkhorn, Solver::Badmm}) {
    const UotParams params = weights(5, 10, 6, 0.3, 2.0, 1.0);
    const UotSolution a = solve_uot(x, params, s);
    const UotSolution b = solve_uot(x, params, s);
    EXPECT_TRUE(a.plan.plan == b.plan.plan);
    EXPECT_EQ(a.diagnostics.objective_trace, b.diagnostics.objective_trace);
  }
}
