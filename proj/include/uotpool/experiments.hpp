#pragma once

// Desk-scale experiment drivers behind the `uotpool` CLI: plan
// approximation, stability grid, convergence in K, runtime bench and the
// synthetic training demo. Each driver returns typed rows; CsvReport turns
// them into files.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "uotpool/core_numerics.hpp"
#include "uotpool/learning.hpp"
#include "uotpool/pooling_ops.hpp"
#include "uotpool/uot_solvers.hpp"

#ifndef UOTPOOL_VERSION
#define UOTPOOL_VERSION "0.0.0"
#endif

namespace uotpool {

inline constexpr const char* kVersion = UOTPOOL_VERSION;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BatchShape {
  std::size_t sets = 50;
  std::size_t samples = 500;
  std::size_t dim = 100;
};

struct ConvergenceWeights {
  double alpha0 = 0.1;
  double alpha12 = 1.0;
  double rho = 1.0;
};

struct BenchSettings {
  std::size_t trials = 10;
  std::size_t warmup = 2;
  std::vector<std::size_t> k_list{4, 8};
};

struct TrainSettings {
  std::size_t n_bags = 200;
  std::size_t bag_size = 16;
  std::size_t dim = 8;
  std::size_t epochs = 30;
  double lr = 2.0;
  Solver solver = Solver::Badmm;
  std::size_t k_iters = 4;
};

/// Every field has a default, so an empty JSON object is a valid config.
struct ExperimentConfig {
  std::uint64_t seed = 2022;
  std::size_t rows = 5;  // D of the approx/stability input
  std::size_t cols = 10;  // N of the approx/stability input
  std::vector<double> grid{1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e2, 1e3, 1e4};
  std::size_t k_iters = 4;  // stability grid modules
  double stability_rho = 1.0;
  std::size_t approx_k_iters = 32;
  std::vector<std::size_t> k_list{1, 2, 4, 8, 16, 32};
  std::vector<Solver> solvers{Solver::Sinkhorn, Solver::Badmm};
  BatchShape batch;
  ConvergenceWeights convergence;
  BenchSettings bench;
  TrainSettings train;
  std::string out = "results";
};

// ---------------------------------------------------------------------------
// Config (de)serialization

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                           const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!ok.count(it.key())) throw ConfigError("unknown config key '" + where + it.key() + "'");
  }
}

inline Solver parse_solver(const std::string& s) {
  if (s == "sinkhorn") return Solver::Sinkhorn;
  if (s == "badmm") return Solver::Badmm;
  throw ConfigError("unknown solver '" + s + "' (expected sinkhorn or badmm)");
}

template <class T>
void read(const nlohmann::json& obj, const char* key, T& dst) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::read;
  detail::reject_unknown(j,
                         {"seed", "dims", "grid", "k_iters", "stability_rho", "approx_k_iters",
                          "k_list", "solvers", "batch", "convergence", "bench", "train", "out"},
                         "");
  ExperimentConfig c;
  read(j, "seed", c.seed);
  if (j.contains("dims")) {
    std::vector<std::size_t> dims;
    read(j, "dims", dims);
    if (dims.size() != 2) throw ConfigError("'dims' must be [D, N]");
    c.rows = dims[0];
    c.cols = dims[1];
  }
  read(j, "grid", c.grid);
  read(j, "k_iters", c.k_iters);
  read(j, "stability_rho", c.stability_rho);
  read(j, "approx_k_iters", c.approx_k_iters);
  read(j, "k_list", c.k_list);
  if (j.contains("solvers")) {
    std::vector<std::string> names;
    read(j, "solvers", names);
    c.solvers.clear();
    for (const auto& n : names) c.solvers.push_back(detail::parse_solver(n));
  }
  if (j.contains("batch")) {
    const auto& b = j.at("batch");
    detail::reject_unknown(b, {"sets", "samples", "dim"}, "batch.");
    read(b, "sets", c.batch.sets);
    read(b, "samples", c.batch.samples);
    read(b, "dim", c.batch.dim);
  }
  if (j.contains("convergence")) {
    const auto& b = j.at("convergence");
    detail::reject_unknown(b, {"alpha0", "alpha12", "rho"}, "convergence.");
    read(b, "alpha0", c.convergence.alpha0);
    read(b, "alpha12", c.convergence.alpha12);
    read(b, "rho", c.convergence.rho);
  }
  if (j.contains("bench")) {
    const auto& b = j.at("bench");
    detail::reject_unknown(b, {"trials", "warmup", "k_list"}, "bench.");
    read(b, "trials", c.bench.trials);
    read(b, "warmup", c.bench.warmup);
    read(b, "k_list", c.bench.k_list);
  }
  if (j.contains("train")) {
    const auto& b = j.at("train");
    detail::reject_unknown(b, {"n_bags", "bag_size", "dim", "epochs", "lr", "solver", "k_iters"},
                           "train.");
    read(b, "n_bags", c.train.n_bags);
    read(b, "bag_size", c.train.bag_size);
    read(b, "dim", c.train.dim);
    read(b, "epochs", c.train.epochs);
    read(b, "lr", c.train.lr);
    read(b, "k_iters", c.train.k_iters);
    if (b.contains("solver")) {
      std::string s;
      read(b, "solver", s);
      c.train.solver = detail::parse_solver(s);
    }
  }
  read(j, "out", c.out);

  if (c.rows == 0 || c.cols == 0) throw ConfigError("'dims' entries must be positive");
  if (c.grid.empty()) throw ConfigError("'grid' must not be empty");
  for (double g : c.grid) {
    if (!(g > 0.0) || !std::isfinite(g)) throw ConfigError("'grid' values must be finite and > 0");
  }
  if (c.k_iters == 0 || c.approx_k_iters == 0 || c.train.k_iters == 0) {
    throw ConfigError("iteration counts must be positive");
  }
  if (c.k_list.empty() || std::find(c.k_list.begin(), c.k_list.end(), 0u) != c.k_list.end()) {
    throw ConfigError("'k_list' must hold positive counts");
  }
  if (c.solvers.empty()) throw ConfigError("'solvers' must not be empty");
  if (c.batch.sets == 0 || c.batch.samples == 0 || c.batch.dim == 0) {
    throw ConfigError("'batch' sizes must be positive");
  }
  if (c.bench.trials == 0) throw ConfigError("'bench.trials' must be positive");
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_config(j);
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json solvers = nlohmann::json::array();
  for (Solver s : c.solvers) solvers.push_back(to_string(s));
  return {{"seed", c.seed},
          {"dims", {c.rows, c.cols}},
          {"grid", c.grid},
          {"k_iters", c.k_iters},
          {"stability_rho", c.stability_rho},
          {"approx_k_iters", c.approx_k_iters},
          {"k_list", c.k_list},
          {"solvers", solvers},
          {"batch", {{"sets", c.batch.sets}, {"samples", c.batch.samples}, {"dim", c.batch.dim}}},
          {"convergence",
           {{"alpha0", c.convergence.alpha0},
            {"alpha12", c.convergence.alpha12},
            {"rho", c.convergence.rho}}},
          {"bench",
           {{"trials", c.bench.trials}, {"warmup", c.bench.warmup}, {"k_list", c.bench.k_list}}},
          {"train",
           {{"n_bags", c.train.n_bags},
            {"bag_size", c.train.bag_size},
            {"dim", c.train.dim},
            {"epochs", c.train.epochs},
            {"lr", c.train.lr},
            {"solver", to_string(c.train.solver)},
            {"k_iters", c.train.k_iters}}},
          {"out", c.out}};
}

// ---------------------------------------------------------------------------
// CSV

/// Locale-independent, round-trippable (17 significant digits).
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

struct CsvReport {
  std::string file_name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row) {
    if (row.size() != header.size()) {
      throw std::logic_error(file_name + ": row has " + std::to_string(row.size()) +
                             " cells, header has " + std::to_string(header.size()));
    }
    rows.push_back(std::move(row));
  }

  std::string render() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }
};

/// Writes to a temporary sibling and renames, so readers never see a
/// partially written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw std::runtime_error("failed writing " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Inputs

inline DenseMatrix random_input(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  DenseMatrix x(rows, cols);
  for (double& v : x.values()) v = detail::unit_uniform(rng);
  return x;
}

/// Uniform draw from the simplex (normalized exponentials).
inline SimplexVector random_simplex(std::size_t dim, std::mt19937_64& rng) {
  Vector w(dim);
  for (double& v : w) v = -std::log1p(-detail::unit_uniform(rng)) + 1e-12;
  return SimplexVector::normalized(std::move(w));
}

inline std::vector<DenseMatrix> random_batch(const BatchShape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<DenseMatrix> batch;
  batch.reserve(shape.sets);
  for (std::size_t i = 0; i < shape.sets; ++i) batch.push_back(random_input(shape.dim, shape.samples, rng));
  return batch;
}

// ---------------------------------------------------------------------------
// approx

struct ApproxEntry {
  std::string target;  // mean | max | attention
  Solver solver;
  DenseMatrix truth;
  DenseMatrix solved;
  double plan_error;    // max |P* - truth|
  double pooled_error;  // max |f_uot(X) - reference pooling|
  bool has_nan;
  double total_mass;
};

struct ApproxResult {
  DenseMatrix x;
  SimplexVector attention;
  std::vector<ApproxEntry> entries;
};

inline ApproxResult cmd_approx(const ExperimentConfig& config) {
  std::mt19937_64 rng(config.seed);
  const std::size_t rows = config.rows;
  const std::size_t cols = config.cols;
  DenseMatrix x = random_input(rows, cols, rng);
  SimplexVector attention = random_simplex(cols, rng);
  const std::size_t k = config.approx_k_iters;
  const double inv_rows = 1.0 / static_cast<double>(rows);

  DenseMatrix mean_truth(rows, cols, 1.0 / static_cast<double>(rows * cols));
  DenseMatrix max_truth(rows, cols, 0.0);
  const MaxPoolResult max_ref = max_pool_with_argmax(x);
  for (std::size_t r = 0; r < rows; ++r) max_truth(r, max_ref.argmax[r]) = inv_rows;
  DenseMatrix att_truth(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) att_truth(r, c) = inv_rows * attention[c];
  }

  struct Target {
    const char* name;
    const DenseMatrix* truth;
    UotParams params;
    PooledVector reference;
  };
  std::vector<Target> targets;
  targets.push_back({"mean", &mean_truth, mean_config(rows, cols, k), mean_pool(x)});
  targets.push_back({"max", &max_truth, max_config(rows, cols, k), max_ref.pooled});
  targets.push_back(
      {"attention", &att_truth, attention_config(rows, attention, k), weighted_pool(x, attention)});

  ApproxResult result{x, attention, {}};
  for (const Target& t : targets) {
    for (Solver s : config.solvers) {
      UotSolution sol = solve_uot(x, t.params, s);
      double plan_err = 0.0;
      for (std::size_t i = 0; i < sol.plan.plan.size(); ++i) {
        plan_err = std::max(plan_err, std::abs(sol.plan.plan.values()[i] - t.truth->values()[i]));
      }
      double pooled_err = std::numeric_limits<double>::quiet_NaN();
      if (!sol.diagnostics.has_nan) {
        try {
          const PooledVector pooled = pool_with_plan(x, sol.plan);
          pooled_err = 0.0;
          for (std::size_t r = 0; r < rows; ++r) {
            pooled_err = std::max(pooled_err, std::abs(pooled.values[r] - t.reference.values[r]));
          }
        } catch (const DegenerateRowError&) {
        }
      }
      result.entries.push_back({t.name, s, *t.truth, sol.plan.plan, plan_err, pooled_err,
                                sol.diagnostics.has_nan, sol.diagnostics.total_mass});
    }
  }
  return result;
}

inline std::vector<CsvReport> approx_reports(const ApproxResult& r) {
  std::vector<CsvReport> out;
  CsvReport summary{"approx_summary.csv",
                    {"target", "solver", "max_abs_plan_error", "max_abs_pooled_error", "has_nan",
                     "total_mass"},
                    {}};
  for (const ApproxEntry& e : r.entries) {
    CsvReport plan{"approx_plan_" + e.target + "_" + to_string(e.solver) + ".csv",
                   {"row", "col", "truth", "solved"},
                   {}};
    for (std::size_t i = 0; i < e.truth.rows(); ++i) {
      for (std::size_t j = 0; j < e.truth.cols(); ++j) {
        plan.add_row({std::to_string(i), std::to_string(j), format_double(e.truth(i, j)),
                      format_double(e.solved(i, j))});
      }
    }
    out.push_back(std::move(plan));
    summary.add_row({e.target, to_string(e.solver), format_double(e.plan_error),
                     format_double(e.pooled_error), e.has_nan ? "true" : "false",
                     format_double(e.total_mass)});
  }
  out.push_back(std::move(summary));
  return out;
}

// ---------------------------------------------------------------------------
// stability

struct StabilityRow {
  Solver solver;
  Regularizer reg;
  double alpha0;
  double alpha12;
  bool has_nan;
  double total_mass;
};

/// (alpha0, alpha1 = alpha2) over grid x grid for every solver/regularizer
/// pair (Sinkhorn is entropic only).
inline std::vector<StabilityRow> cmd_stability(const ExperimentConfig& config) {
  std::mt19937_64 rng(config.seed);
  const DenseMatrix x = random_input(config.rows, config.cols, rng);
  std::vector<std::pair<Solver, Regularizer>> runs;
  for (Solver s : config.solvers) {
    runs.emplace_back(s, Regularizer::Entropic);
    if (s == Solver::Badmm) runs.emplace_back(s, Regularizer::Quadratic);
  }
  std::vector<StabilityRow> rows;
  for (const auto& [solver, reg] : runs) {
    for (double a0 : config.grid) {
      for (double a12 : config.grid) {
        const UotParams params = UotParams::uniform(config.rows, config.cols, config.k_iters, a0,
                                                    a12, a12, config.stability_rho, reg);
        const UotSolution sol = solve_uot(x, params, solver);
        rows.push_back({solver, reg, a0, a12, sol.diagnostics.has_nan, sol.diagnostics.total_mass});
      }
    }
  }
  return rows;
}

inline CsvReport stability_report(const std::vector<StabilityRow>& rows) {
  CsvReport r{"stability.csv", {"solver", "regularizer", "alpha0", "alpha12", "has_nan", "total_mass"}, {}};
  for (const auto& s : rows) {
    r.add_row({to_string(s.solver), to_string(s.reg), format_double(s.alpha0),
               format_double(s.alpha12), s.has_nan ? "true" : "false", format_double(s.total_mass)});
  }
  return r;
}

// ---------------------------------------------------------------------------
// convergence

struct ConvergenceRow {
  Solver solver;
  Regularizer reg;
  std::size_t k_iters;
  double objective;  // batch mean of the objective at the returned plans
};

inline std::vector<ConvergenceRow> cmd_convergence(const ExperimentConfig& config) {
  const std::vector<DenseMatrix> batch = random_batch(config.batch, config.seed);
  const auto& w = config.convergence;
  std::vector<ConvergenceRow> rows;
  for (Solver solver : config.solvers) {
    std::vector<Regularizer> regs{Regularizer::Entropic};
    if (solver == Solver::Badmm) regs.push_back(Regularizer::Quadratic);
    for (Regularizer reg : regs) {
      for (std::size_t k : config.k_list) {
        double total = 0.0;
        for (const DenseMatrix& x : batch) {
          const UotParams params = UotParams::uniform(x.rows(), x.cols(), k, w.alpha0, w.alpha12,
                                                      w.alpha12, w.rho, reg);
          const UotSolution sol = solve_uot(x, params, solver);
          double value = std::numeric_limits<double>::quiet_NaN();
          if (!sol.diagnostics.has_nan) {
            value = uot_objective(x, sol.plan, w.alpha0, w.alpha12, w.alpha12, params.p0,
                                  params.q0, reg);
          }
          total += value;
        }
        rows.push_back({solver, reg, k, total / static_cast<double>(batch.size())});
      }
    }
  }
  return rows;
}

inline CsvReport convergence_report(const std::vector<ConvergenceRow>& rows) {
  CsvReport r{"convergence.csv", {"solver", "regularizer", "k", "objective"}, {}};
  for (const auto& c : rows) {
    r.add_row({to_string(c.solver), to_string(c.reg), std::to_string(c.k_iters),
               format_double(c.objective)});
  }
  return r;
}

// ---------------------------------------------------------------------------
// bench

struct BenchRow {
  std::string method;  // mean | max | attention | mixed | uotp_sinkhorn | uotp_badmm
  std::size_t k_iters;  // 0 for methods without modules
  double mean_ms;
  double std_ms;
  double median_ms;
  double min_ms;
};

/// Wall-clock time of pooling a whole batch, measured with a monotonic clock
/// over `trials` runs after `warmup` discarded runs.
inline std::vector<BenchRow> cmd_bench(const ExperimentConfig& config) {
  const std::vector<DenseMatrix> batch = random_batch(config.batch, config.seed);
  const std::size_t dim = config.batch.dim;
  const std::size_t samples = config.batch.samples;
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  AttentionParams att = AttentionParams::zeros(dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (double& v : att.v_mat.values()) v = scale * (2.0 * detail::unit_uniform(rng) - 1.0);
  for (double& v : att.w_vec) v = 2.0 * detail::unit_uniform(rng) - 1.0;

  using PoolFn = std::function<PooledVector(const DenseMatrix&)>;
  struct Method {
    std::string name;
    std::size_t k;
    PoolFn fn;
    std::vector<double> ms;
  };
  std::vector<Method> methods;
  methods.push_back({"mean", 0, [](const DenseMatrix& x) { return mean_pool(x); }, {}});
  methods.push_back({"max", 0, [](const DenseMatrix& x) { return max_pool(x); }, {}});
  methods.push_back({"attention", 0, [&att](const DenseMatrix& x) { return attention_pool(x, att); }, {}});
  methods.push_back({"mixed", 0, [](const DenseMatrix& x) { return mixed_pool(x, 0.5); }, {}});
  for (Solver solver : config.solvers) {
    for (std::size_t k : config.bench.k_list) {
      const UotParams params = UotParams::uniform(dim, samples, k, 1.0, 1.0, 1.0, 1.0);
      methods.push_back({std::string("uotp_") + to_string(solver), k,
                         [params, solver](const DenseMatrix& x) { return uot_pool(x, params, solver).pooled; },
                         {}});
    }
  }

  double sink = 0.0;  // keeps results observable
  for (Method& m : methods) {
    for (std::size_t i = 0; i < config.bench.warmup; ++i) {
      for (const auto& x : batch) sink += m.fn(x).values[0];
    }
  }
  // Trials are interleaved across methods so slow stretches of machine time
  // spread over all of them instead of landing on one.
  for (std::size_t t = 0; t < config.bench.trials; ++t) {
    for (Method& m : methods) {
      const auto start = std::chrono::steady_clock::now();
      for (const auto& x : batch) sink += m.fn(x).values[0];
      const auto stop = std::chrono::steady_clock::now();
      m.ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    }
  }

  std::vector<BenchRow> rows;
  for (Method& m : methods) {
    const double n = static_cast<double>(m.ms.size());
    const double mean = std::accumulate(m.ms.begin(), m.ms.end(), 0.0) / n;
    double var = 0.0;
    for (double v : m.ms) var += (v - mean) * (v - mean);
    const double sd = m.ms.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    std::sort(m.ms.begin(), m.ms.end());
    const std::size_t mid = m.ms.size() / 2;
    const double median = m.ms.size() % 2 ? m.ms[mid] : 0.5 * (m.ms[mid - 1] + m.ms[mid]);
    rows.push_back({m.name, m.k, mean, sd, median, m.ms.front()});
  }
  if (std::isnan(sink)) rows.front().method += "";  // never taken; reads sink
  return rows;
}

inline CsvReport bench_report(const std::vector<BenchRow>& rows) {
  CsvReport r{"bench.csv", {"method", "k", "mean_ms", "std_ms", "median_ms", "min_ms"}, {}};
  for (const auto& b : rows) {
    r.add_row({b.method, b.k_iters ? std::to_string(b.k_iters) : "", format_double(b.mean_ms),
               format_double(b.std_ms), format_double(b.median_ms), format_double(b.min_ms)});
  }
  return r;
}

// ---------------------------------------------------------------------------
// train

inline TrainResult cmd_train(const ExperimentConfig& config) {
  const auto& t = config.train;
  const SyntheticTask task = SyntheticTask::max_task(t.n_bags, t.bag_size, t.dim, config.seed);
  const UotParams init = UotParams::uniform(t.dim, t.bag_size, t.k_iters, 1.0, 1.0, 1.0, 1.0);
  const PoolingSpec spec = t.solver == Solver::Sinkhorn ? PoolingSpec{pooling::UotSinkhorn{init}}
                                                        : PoolingSpec{pooling::UotBadmm{init}};
  return train_synthetic(task, spec, t.epochs, t.lr);
}

inline CsvReport train_report(const TrainResult& result) {
  CsvReport r{"train.csv", {"epoch", "loss", "status"}, {}};
  for (std::size_t e = 0; e < result.losses.size(); ++e) {
    r.add_row({std::to_string(e), format_double(result.losses[e]), "ok"});
  }
  if (result.aborted) {
    std::string why = result.message;
    std::replace(why.begin(), why.end(), ',', ';');
    std::replace(why.begin(), why.end(), '\n', ' ');
    r.add_row({std::to_string(result.losses.size()), "nan", "aborted: " + why});
  }
  return r;
}

// ---------------------------------------------------------------------------
// Driver

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"approx", "stability", "convergence", "bench", "train"};
  return names;
}

struct CommandOutput {
  std::vector<CsvReport> reports;
  nlohmann::json notes = nlohmann::json::array();
};

inline CommandOutput run_command(const std::string& name, const ExperimentConfig& config) {
  CommandOutput out;
  if (name == "approx") {
    out.reports = approx_reports(cmd_approx(config));
  } else if (name == "stability") {
    out.reports.push_back(stability_report(cmd_stability(config)));
  } else if (name == "convergence") {
    out.reports.push_back(convergence_report(cmd_convergence(config)));
  } else if (name == "bench") {
    out.reports.push_back(bench_report(cmd_bench(config)));
    out.notes.push_back(
        "only in-scope poolings are timed; learned neural poolings (DeepSet, Set2Set, DynamicP, "
        "GNP, SAGP, ASAP) are not included; absolute numbers are CPU wall-clock, not GPU");
  } else if (name == "train") {
    const TrainResult result = cmd_train(config);
    out.reports.push_back(train_report(result));
    if (result.aborted) out.notes.push_back("training aborted: " + result.message);
  } else {
    throw ConfigError("unknown command '" + name + "'");
  }
  return out;
}

/// Writes every report plus manifest.json into `dir`. Nothing is written
/// until all reports exist in memory.
inline std::vector<std::filesystem::path> write_outputs(const std::filesystem::path& dir,
                                                        const std::string& command,
                                                        const ExperimentConfig& config,
                                                        const CommandOutput& output) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  nlohmann::json files = nlohmann::json::array();
  for (const auto& r : output.reports) {
    const auto path = dir / r.file_name;
    write_file_atomic(path, r.render());
    written.push_back(path);
    files.push_back(r.file_name);
  }
  nlohmann::json manifest{{"command", command},
                          {"version", kVersion},
                          {"files", files},
                          {"config", config_to_json(config)},
                          {"notes", output.notes}};
  const auto path = dir / "manifest.json";
  write_file_atomic(path, manifest.dump(2) + "\n");
  written.push_back(path);
  return written;
}

}  // namespace uotpool
