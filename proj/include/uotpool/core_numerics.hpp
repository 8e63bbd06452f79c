#pragma once

// Dense matrix/vector primitives and the log-domain kernels shared by the
// unrolled solvers. Everything here is a pure function of its arguments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace uotpool {

using Vector = std::vector<double>;

/// Raised when operand shapes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A row of a plan has no positive mass, so its conditional distribution is
/// undefined. Carries the offending row index.
class DegenerateRowError : public std::domain_error {
 public:
  explicit DegenerateRowError(std::size_t row)
      : std::domain_error("degenerate row " + std::to_string(row) +
                          ": row sum is not strictly positive"),
        row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Row-major D x N matrix of doubles. Columns are samples, rows are feature
/// dimensions. Entries are not required to be finite: solver outputs may
/// carry NaN/Inf, which diagnostics report.
class DenseMatrix {
 public:
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols) {
    if (rows == 0 || cols == 0) {
      throw DimensionError("DenseMatrix requires rows >= 1 and cols >= 1");
    }
    data_.assign(rows * cols, fill);
  }

  DenseMatrix(std::size_t rows, std::size_t cols, Vector data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0) {
      throw DimensionError("DenseMatrix requires rows >= 1 and cols >= 1");
    }
    if (data_.size() != rows * cols) {
      throw DimensionError("DenseMatrix entry count " + std::to_string(data_.size()) +
                           " != rows*cols " + std::to_string(rows * cols));
    }
  }

  DenseMatrix(std::initializer_list<std::initializer_list<double>> nested) {
    rows_ = nested.size();
    cols_ = rows_ == 0 ? 0 : nested.begin()->size();
    if (rows_ == 0 || cols_ == 0) {
      throw DimensionError("DenseMatrix requires rows >= 1 and cols >= 1");
    }
    data_.reserve(rows_ * cols_);
    for (const auto& row : nested) {
      if (row.size() != cols_) throw DimensionError("ragged initializer for DenseMatrix");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  bool same_shape(const DenseMatrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

inline constexpr double kSimplexTolerance = 1e-9;

/// Nonnegative weights summing to one.
class SimplexVector {
 public:
  explicit SimplexVector(Vector weights) : weights_(std::move(weights)) {
    if (weights_.empty()) throw std::invalid_argument("SimplexVector must be nonempty");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw std::invalid_argument("SimplexVector weights must be finite and nonnegative");
      }
      total += w;
    }
    if (std::abs(total - 1.0) > kSimplexTolerance) {
      throw std::invalid_argument("SimplexVector weights sum to " + std::to_string(total));
    }
  }

  static SimplexVector uniform(std::size_t dim) {
    if (dim == 0) throw std::invalid_argument("SimplexVector must be nonempty");
    return SimplexVector(Vector(dim, 1.0 / static_cast<double>(dim)));
  }

  /// Rescales nonnegative masses onto the simplex.
  static SimplexVector normalized(Vector masses) {
    double total = 0.0;
    for (double m : masses) total += m;
    if (!(total > 0.0) || !std::isfinite(total)) {
      throw std::invalid_argument("cannot normalize masses with non-positive total");
    }
    for (double& m : masses) m /= total;
    return SimplexVector(std::move(masses));
  }

  std::size_t dim() const noexcept { return weights_.size(); }
  double operator[](std::size_t i) const noexcept { return weights_[i]; }
  std::span<const double> weights() const noexcept { return weights_; }
  bool strictly_positive() const noexcept {
    return std::all_of(weights_.begin(), weights_.end(), [](double w) { return w > 0.0; });
  }

  friend bool operator==(const SimplexVector&, const SimplexVector&) = default;

 private:
  Vector weights_;
};

namespace detail {

// max + log(sum(exp(v - max))). An all -inf input stays -inf; NaN and +inf
// propagate as NaN/+inf without throwing.
inline double logsumexp(std::span<const double> v) noexcept {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : v) hi = std::max(hi, x);
  if (std::isnan(hi)) return hi;
  if (hi == -std::numeric_limits<double>::infinity()) return hi;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

inline void logsumexp_rows_into(const DenseMatrix& m, Vector& out) {
  out.resize(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = logsumexp(m.row(r));
}

// Column reduction walks rows in order so every column sees the same
// accumulation order regardless of its position.
inline void logsumexp_cols_into(const DenseMatrix& m, Vector& out) {
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  Vector hi(cols, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < cols; ++c) {
      // std::max would drop NaN depending on argument order
      if (std::isnan(row[c]) || row[c] > hi[c]) hi[c] = row[c];
    }
  }
  Vector acc(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < cols; ++c) acc[c] += std::exp(row[c] - hi[c]);
  }
  out.resize(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    if (std::isnan(hi[c]) || hi[c] == -std::numeric_limits<double>::infinity()) {
      out[c] = hi[c];
    } else {
      out[c] = hi[c] + std::log(acc[c]);
    }
  }
}

// 0 * log(0) := 0
inline double xlogy(double x, double y) noexcept { return x == 0.0 ? 0.0 : x * std::log(y); }

}  // namespace detail

/// Stabilized log-sum-exp of every row; result has one entry per row.
inline Vector logsumexp_rows(const DenseMatrix& m) {
  Vector out;
  detail::logsumexp_rows_into(m, out);
  return out;
}

/// Stabilized log-sum-exp of every column; result has one entry per column.
inline Vector logsumexp_cols(const DenseMatrix& m) {
  Vector out;
  detail::logsumexp_cols_into(m, out);
  return out;
}

inline SimplexVector softmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("softmax of an empty vector");
  const double hi = *std::max_element(v.begin(), v.end());
  Vector w(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    w[i] = std::exp(v[i] - hi);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return SimplexVector(std::move(w));
}

/// log(1 + e^x) without overflow or loss of positivity.
inline double softplus(double x) noexcept {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// Inverse of softplus for y > 0.
inline double inverse_softplus(double y) {
  if (!(y > 0.0)) throw std::domain_error("inverse_softplus requires y > 0");
  if (y > 30.0) return y + std::log(-std::expm1(-y));
  return std::log(std::expm1(y));
}

inline double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Generalized KL divergence sum a(log a - log b) - sum(a - b). Inputs need
/// not be normalized.
inline double kl_divergence(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("kl_divergence length mismatch: " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  }
  double value = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(b[i] > 0.0)) throw std::domain_error("kl_divergence requires b > 0");
    if (a[i] < 0.0) throw std::domain_error("kl_divergence requires a >= 0");
    value += detail::xlogy(a[i], a[i]) - detail::xlogy(a[i], b[i]) - (a[i] - b[i]);
  }
  return value;
}

inline Vector row_sums(const DenseMatrix& m) {
  Vector out(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (double v : m.row(r)) out[r] += v;
  }
  return out;
}

inline Vector col_sums(const DenseMatrix& m) {
  Vector out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += row[c];
  }
  return out;
}

/// Normalizes each row of a nonnegative matrix to a conditional distribution.
/// A row without strictly positive finite mass is an error, never filled in.
inline DenseMatrix row_conditional(const DenseMatrix& p) {
  DenseMatrix out = p;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double total = 0.0;
    for (double v : p.row(r)) total += v;
    if (!(total > 0.0) || !std::isfinite(total)) throw DegenerateRowError(r);
    for (double& v : out.row(r)) v /= total;
  }
  return out;
}

}  // namespace uotpool
