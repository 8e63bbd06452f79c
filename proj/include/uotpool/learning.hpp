#pragma once

// Learning the UOT pooling parameters: unconstrained reparametrization,
// attention priors, a central-difference gradient oracle, and a small
// full-batch trainer on synthetic bag-classification tasks.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "uotpool/core_numerics.hpp"
#include "uotpool/pooling_ops.hpp"
#include "uotpool/uot_solvers.hpp"

namespace uotpool {

struct FixedUniform {};

/// Priors computed from the input: p0 = softmax(U X 1_N),
/// q0 = softmax(w^T tanh(V X)). U must be present.
struct LearnedAttention {
  AttentionParams params;
};

using PriorMode = std::variant<FixedUniform, LearnedAttention>;

/// alpha_i = softplus(beta_i), rho = softplus(tau).
struct ReparamState {
  Vector beta0;
  Vector beta1;
  Vector beta2;
  Vector tau;
  PriorMode prior_mode = FixedUniform{};

  /// softplus(beta) = softplus(tau) = 1 for every module, uniform priors.
  static ReparamState initial(std::size_t k_iters) {
    const double unit = inverse_softplus(1.0);
    return {Vector(k_iters, unit), Vector(k_iters, unit), Vector(k_iters, unit),
            Vector(k_iters, unit), FixedUniform{}};
  }

  /// Pre-image of the weights of existing parameters; priors become uniform.
  static ReparamState from_params(const UotParams& params) {
    auto inv = [](const Vector& w) {
      Vector out(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) out[i] = inverse_softplus(w[i]);
      return out;
    };
    return {inv(params.alpha0), inv(params.alpha1), inv(params.alpha2), inv(params.rho),
            FixedUniform{}};
  }

  std::size_t k_iters() const noexcept { return beta0.size(); }

  void validate() const {
    const std::size_t k = beta0.size();
    if (k == 0 || beta1.size() != k || beta2.size() != k || tau.size() != k) {
      throw std::invalid_argument("ReparamState: beta0, beta1, beta2, tau must share K > 0");
    }
    if (const auto* att = std::get_if<LearnedAttention>(&prior_mode)) {
      if (!att->params.u_mat) {
        throw std::invalid_argument("ReparamState: learned priors need the U matrix");
      }
    }
  }

  /// Parameter ordering: beta0, beta1, beta2, tau, then U, V (row-major) and w
  /// when the priors are learned.
  Vector flatten() const {
    Vector out;
    for (const Vector* v : {&beta0, &beta1, &beta2, &tau}) out.insert(out.end(), v->begin(), v->end());
    if (const auto* att = std::get_if<LearnedAttention>(&prior_mode)) {
      const auto u = att->params.u_mat->values();
      const auto v = att->params.v_mat.values();
      out.insert(out.end(), u.begin(), u.end());
      out.insert(out.end(), v.begin(), v.end());
      out.insert(out.end(), att->params.w_vec.begin(), att->params.w_vec.end());
    }
    return out;
  }

  std::size_t parameter_count() const { return flatten().size(); }

  /// Inverse of flatten(); the shape of *this is the template.
  ReparamState with_values(std::span<const double> flat) const {
    if (flat.size() != parameter_count()) {
      throw DimensionError("ReparamState: flat vector has " + std::to_string(flat.size()) +
                           " entries, expected " + std::to_string(parameter_count()));
    }
    ReparamState out = *this;
    std::size_t at = 0;
    auto take = [&](std::span<double> dst) {
      for (double& v : dst) v = flat[at++];
    };
    take(out.beta0);
    take(out.beta1);
    take(out.beta2);
    take(out.tau);
    if (auto* att = std::get_if<LearnedAttention>(&out.prior_mode)) {
      take(att->params.u_mat->values());
      take(att->params.v_mat.values());
      take(att->params.w_vec);
    }
    return out;
  }
};

/// p0 = softmax(U X 1_N)
inline SimplexVector attention_row_prior(const DenseMatrix& x, const AttentionParams& params) {
  params.validate(x.rows());
  if (!params.u_mat) throw std::invalid_argument("attention_row_prior: U is missing");
  const Vector sums = row_sums(x);
  Vector logits(x.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto ui = params.u_mat->row(i);
    for (std::size_t j = 0; j < x.rows(); ++j) logits[i] += ui[j] * sums[j];
  }
  return softmax(logits);
}

/// Constrained solver parameters from an unconstrained state. FixedUniform
/// ignores X apart from its shape.
inline UotParams materialize_params(const ReparamState& state, const DenseMatrix& x,
                                    Regularizer reg = Regularizer::Entropic) {
  state.validate();
  auto positive = [](const Vector& v) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = softplus(v[i]);
    return out;
  };
  SimplexVector p0 = SimplexVector::uniform(x.rows());
  SimplexVector q0 = SimplexVector::uniform(x.cols());
  if (const auto* att = std::get_if<LearnedAttention>(&state.prior_mode)) {
    p0 = attention_row_prior(x, att->params);
    q0 = attention_weights(x, att->params);
  }
  return UotParams{state.k_iters(),       positive(state.beta0), positive(state.beta1),
                   positive(state.beta2), positive(state.tau),   std::move(p0),
                   std::move(q0),         reg};
}

// ---------------------------------------------------------------------------
// Finite-difference gradient oracle

using GradientVector = Vector;

class GradientError : public std::runtime_error {
 public:
  GradientError(std::size_t coordinate, const std::string& why)
      : std::runtime_error("gradient probe failed at coordinate " + std::to_string(coordinate) +
                           ": " + why),
        coordinate_(coordinate) {}
  std::size_t coordinate() const noexcept { return coordinate_; }

 private:
  std::size_t coordinate_;
};

inline constexpr double kDefaultFdEps = 1e-5;

/// Central differences (L(x + eps e_j) - L(x - eps e_j)) / (2 eps).
inline GradientVector fd_gradient(const std::function<double(std::span<const double>)>& loss,
                                  std::span<const double> point, double eps = kDefaultFdEps) {
  if (!(eps > 0.0)) throw std::invalid_argument("fd_gradient: eps must be positive");
  Vector probe(point.begin(), point.end());
  GradientVector grad(point.size(), 0.0);
  auto eval = [&](std::size_t j) {
    double v = 0.0;
    try {
      v = loss(probe);
    } catch (const std::exception& e) {
      throw GradientError(j, e.what());
    }
    if (!std::isfinite(v)) throw GradientError(j, "loss is not finite");
    return v;
  };
  for (std::size_t j = 0; j < point.size(); ++j) {
    probe[j] = point[j] + eps;
    const double up = eval(j);
    probe[j] = point[j] - eps;
    const double down = eval(j);
    probe[j] = point[j];
    grad[j] = (up - down) / (2.0 * eps);
  }
  return grad;
}

/// Gradient with respect to ReparamState::flatten() ordering.
inline GradientVector fd_gradient(const std::function<double(const ReparamState&)>& loss,
                                  const ReparamState& state, double eps = kDefaultFdEps) {
  const Vector flat = state.flatten();
  return fd_gradient(
      [&](std::span<const double> v) { return loss(state.with_values(v)); },
      std::span<const double>(flat), eps);
}

// ---------------------------------------------------------------------------
// Synthetic bag classification

/// Positive iff max_n X[feature, n] > threshold.
struct MaxThreshold {
  std::size_t feature = 0;
  double threshold = 0.5;
};

/// Positive iff mean_n X[feature, n] > threshold.
struct MeanThreshold {
  std::size_t feature = 0;
  double threshold = 0.5;
};

using TaskRule = std::variant<MaxThreshold, MeanThreshold>;

struct SyntheticTask {
  std::size_t n_bags = 200;
  std::size_t bag_size = 16;
  std::size_t dim = 8;
  TaskRule rule = MaxThreshold{};
  std::uint64_t seed = 0;

  /// Max task whose threshold makes either label equally likely for
  /// i.i.d. uniform entries: 0.5^(1/N).
  static SyntheticTask max_task(std::size_t n_bags, std::size_t bag_size, std::size_t dim,
                                std::uint64_t seed) {
    return {n_bags, bag_size, dim,
            MaxThreshold{0, std::pow(0.5, 1.0 / static_cast<double>(bag_size))}, seed};
  }
};

struct SyntheticData {
  std::vector<DenseMatrix> bags;
  std::vector<int> labels;  // 0 or 1
};

namespace detail {

// Uniform [0, 1) from the top 53 bits; identical on every platform.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline int rule_label(const DenseMatrix& bag, const TaskRule& rule) {
  return std::visit(
      overloaded{[&](const MaxThreshold& r) {
                   double m = bag(r.feature, 0);
                   for (double v : bag.row(r.feature)) m = std::max(m, v);
                   return m > r.threshold ? 1 : 0;
                 },
                 [&](const MeanThreshold& r) {
                   double s = 0.0;
                   for (double v : bag.row(r.feature)) s += v;
                   return s / static_cast<double>(bag.cols()) > r.threshold ? 1 : 0;
                 }},
      rule);
}

}  // namespace detail

/// Bags of i.i.d. uniform entries labelled by the task rule. Rejection
/// sampling fills equal quotas per label, so classes differ by at most one.
inline SyntheticData generate_task(const SyntheticTask& task) {
  if (task.n_bags < 2 || task.bag_size == 0 || task.dim == 0) {
    throw std::invalid_argument("SyntheticTask: need n_bags >= 2, bag_size >= 1, dim >= 1");
  }
  const std::size_t feature = std::visit([](const auto& r) { return r.feature; }, task.rule);
  if (feature >= task.dim) throw std::invalid_argument("SyntheticTask: rule feature out of range");
  std::mt19937_64 rng(task.seed);
  std::size_t quota[2] = {task.n_bags / 2, task.n_bags - task.n_bags / 2};
  SyntheticData data;
  const std::size_t max_draws = 1000 * task.n_bags;
  for (std::size_t draws = 0; data.bags.size() < task.n_bags; ++draws) {
    if (draws >= max_draws) {
      throw std::runtime_error("SyntheticTask: rule is too unbalanced to fill both classes");
    }
    DenseMatrix bag(task.dim, task.bag_size);
    for (double& v : bag.values()) v = detail::unit_uniform(rng);
    const int label = detail::rule_label(bag, task.rule);
    if (quota[label] == 0) continue;
    --quota[label];
    data.bags.push_back(std::move(bag));
    data.labels.push_back(label);
  }
  return data;
}

// ---------------------------------------------------------------------------
// Trainer

struct TrainOptions {
  double fd_eps = kDefaultFdEps;
  bool train_pooling = true;  // false freezes the UOT weights, only the readout learns
};

struct TrainResult {
  Vector losses;  // losses[e] is the mean loss before update e; epochs + 1 entries
  bool aborted = false;
  std::string message;
  ReparamState final_state;
  Vector readout;  // D weights then the bias
};

namespace detail {

inline double logistic_loss(double logit, int label) {
  // -log sigmoid(s * logit) = softplus(-s * logit)
  return softplus(label == 1 ? -logit : logit);
}

// Features are standardized across the batch before the linear readout, so
// the readout sees the spread of the pooled values rather than their offset.
inline std::vector<Vector> standardize(const std::vector<PooledVector>& features) {
  const std::size_t dim = features.front().dim();
  const double count = static_cast<double>(features.size());
  Vector mean(dim, 0.0);
  Vector var(dim, 0.0);
  for (const auto& f : features) {
    for (std::size_t d = 0; d < dim; ++d) mean[d] += f.values[d] / count;
  }
  for (const auto& f : features) {
    for (std::size_t d = 0; d < dim; ++d) var[d] += (f.values[d] - mean[d]) * (f.values[d] - mean[d]) / count;
  }
  std::vector<Vector> out(features.size(), Vector(dim));
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      out[i][d] = (features[i].values[d] - mean[d]) / std::sqrt(var[d] + 1e-12);
    }
  }
  return out;
}

inline double readout_loss(const std::vector<Vector>& features, const std::vector<int>& labels,
                           std::span<const double> readout) {
  double total = 0.0;
  const std::size_t dim = readout.size() - 1;
  for (std::size_t i = 0; i < features.size(); ++i) {
    double logit = readout[dim];
    for (std::size_t d = 0; d < dim; ++d) logit += readout[d] * features[i][d];
    total += logistic_loss(logit, labels[i]);
  }
  return total / static_cast<double>(features.size());
}

struct UotChoice {
  const UotParams* params;
  Solver solver;
};

inline UotChoice uot_choice(const PoolingSpec& spec) {
  if (const auto* s = std::get_if<pooling::UotSinkhorn>(&spec)) return {&s->params, Solver::Sinkhorn};
  if (const auto* s = std::get_if<pooling::UotBadmm>(&spec)) return {&s->params, Solver::Badmm};
  throw std::invalid_argument("train_synthetic needs a UotSinkhorn or UotBadmm pooling spec");
}

}  // namespace detail

/// Full-batch gradient descent on the mean logistic loss of a linear readout
/// over UOT-pooled bags. The UOT weights start at the pre-image of the PoolingSpec's
/// weights; priors stay uniform. Gradients come from fd_gradient.
inline TrainResult train_synthetic(const SyntheticTask& task, const PoolingSpec& spec,
                                   std::size_t epochs, double lr, const TrainOptions& options = {}) {
  const detail::UotChoice choice = detail::uot_choice(spec);
  const Regularizer reg = choice.params->reg;
  const SyntheticData data = generate_task(task);

  TrainResult result;
  result.final_state = ReparamState::from_params(*choice.params);
  result.readout.assign(task.dim + 1, 0.0);

  auto features_for = [&](const ReparamState& state) {
    std::vector<PooledVector> feats;
    feats.reserve(data.bags.size());
    for (const DenseMatrix& bag : data.bags) {
      const UotParams params = materialize_params(state, bag, reg);
      UotPoolResult pooled = uot_pool(bag, params, choice.solver);
      if (pooled.diagnostics.has_nan) throw std::runtime_error("solver produced NaN/Inf");
      feats.push_back(std::move(pooled.pooled));
    }
    return detail::standardize(feats);
  };

  for (std::size_t epoch = 0; epoch <= epochs; ++epoch) {
    try {
      const std::vector<Vector> feats = features_for(result.final_state);
      const double loss = detail::readout_loss(feats, data.labels, result.readout);
      if (!std::isfinite(loss)) throw std::runtime_error("loss is not finite");
      result.losses.push_back(loss);
      if (epoch == epochs) break;

      const GradientVector g_readout = fd_gradient(
          [&](std::span<const double> w) { return detail::readout_loss(feats, data.labels, w); },
          std::span<const double>(result.readout), options.fd_eps);
      GradientVector g_pool;
      if (options.train_pooling) {
        const Vector frozen_readout = result.readout;
        g_pool = fd_gradient(
            [&](const ReparamState& s) {
              return detail::readout_loss(features_for(s), data.labels, frozen_readout);
            },
            result.final_state, options.fd_eps);
      }
      for (std::size_t j = 0; j < result.readout.size(); ++j) result.readout[j] -= lr * g_readout[j];
      if (options.train_pooling) {
        Vector flat = result.final_state.flatten();
        for (std::size_t j = 0; j < flat.size(); ++j) flat[j] -= lr * g_pool[j];
        result.final_state = result.final_state.with_values(flat);
      }
    } catch (const std::exception& e) {
      result.aborted = true;
      result.message = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
  }
  return result;
}

}  // namespace uotpool
