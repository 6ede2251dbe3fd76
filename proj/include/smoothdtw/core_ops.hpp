#pragma once

// Smooth minimum operators, their penalties, L2 normalization and the
// matching-cost matrices that the alignment recurrence consumes.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smoothdtw/errors.hpp"

namespace smoothdtw {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class OperatorKind { SmoothMin, MinGamma, HardMin };

inline std::string_view to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::SmoothMin: return "smooth_min";
    case OperatorKind::MinGamma: return "min_gamma";
    case OperatorKind::HardMin: return "hard_min";
  }
  return "unknown";
}

inline OperatorKind operator_kind_from_string(std::string_view name) {
  if (name == "smooth_min") return OperatorKind::SmoothMin;
  if (name == "min_gamma") return OperatorKind::MinGamma;
  if (name == "hard_min") return OperatorKind::HardMin;
  throw InvalidArgument("unknown operator kind '" + std::string(name) + "'");
}

/// Temperature plus operator choice for the local decision in the recurrence.
/// A zero temperature always means the exact minimum.
struct SmoothMinConfig {
  double gamma = 0.1;
  OperatorKind kind = OperatorKind::SmoothMin;

  OperatorKind effective_kind() const {
    return gamma == 0.0 ? OperatorKind::HardMin : kind;
  }
};

/// A D x M matrix whose columns are per-timestep embeddings.
class FeatureSequence {
 public:
  FeatureSequence() = default;

  explicit FeatureSequence(Matrix data) : data_(std::move(data)) {
    if (data_.rows() < 1 || data_.cols() < 1) {
      throw InvalidArgument("feature sequence needs D >= 1 and M >= 1");
    }
    if (!data_.allFinite()) {
      throw InvalidArgument("feature sequence has a non-finite entry");
    }
  }

  Eigen::Index dim() const { return data_.rows(); }
  Eigen::Index length() const { return data_.cols(); }
  const Matrix& matrix() const { return data_; }
  auto column(Eigen::Index i) const { return data_.col(i); }

  bool is_normalized(double tol = 1e-9) const {
    for (Eigen::Index i = 0; i < data_.cols(); ++i) {
      if (std::abs(data_.col(i).norm() - 1.0) > tol) return false;
    }
    return true;
  }

  friend bool operator==(const FeatureSequence& a, const FeatureSequence& b) {
    return a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() &&
           a.data_ == b.data_;
  }

 private:
  Matrix data_;
};

enum class CostDirection { XToY, YToX };

/// Matching costs c(i, j) between a source sequence (rows) and a target (columns).
struct CostMatrix {
  Matrix values;
  double beta = 0.1;
  CostDirection direction = CostDirection::XToY;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

namespace detail {

inline void check_operands(std::span<const double> a, double gamma) {
  if (a.empty()) throw InvalidArgument("smooth minimum of an empty vector");
  for (double v : a) {
    if (!std::isfinite(v)) throw InvalidArgument("smooth minimum of a non-finite entry");
  }
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw InvalidArgument("temperature must be finite and non-negative");
  }
}

/// Index of the smallest entry; ties go to the lowest index.
inline std::size_t argmin(std::span<const double> a) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < a.size(); ++i) {
    if (a[i] < a[best]) best = i;
  }
  return best;
}

// Penalties are evaluated relative to the minimum so that the shifted
// exponents are all <= 0.

inline double smooth_min_penalty_unchecked(std::span<const double> a, double gamma) {
  const double lo = a[argmin(a)];
  double num = 0.0;
  double den = 0.0;
  for (double v : a) {
    const double w = std::exp(-(v - lo) / gamma);
    num += (v - lo) * w;
    den += w;
  }
  return num / den;
}

inline double min_gamma_penalty_unchecked(std::span<const double> a, double gamma) {
  const std::size_t k = argmin(a);
  const double lo = a[k];
  double rest = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i != k) rest += std::exp(-(a[i] - lo) / gamma);
  }
  return -gamma * std::log1p(rest);
}

inline double smooth_value_unchecked(std::span<const double> a, const SmoothMinConfig& cfg) {
  const double lo = a[argmin(a)];
  if (a.size() == 1) return lo;
  switch (cfg.effective_kind()) {
    case OperatorKind::HardMin: return lo;
    case OperatorKind::SmoothMin: return lo + smooth_min_penalty_unchecked(a, cfg.gamma);
    case OperatorKind::MinGamma: return lo + min_gamma_penalty_unchecked(a, cfg.gamma);
  }
  return lo;
}

/// Row-wise log-sum-exp of a matrix, max-shifted.
inline Vector row_logsumexp(const Matrix& z) {
  Vector out(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double hi = z.row(i).maxCoeff();
    out(i) = hi + std::log((z.row(i).array() - hi).exp().sum());
  }
  return out;
}

/// Row-wise softmax, max-shifted.
inline Matrix row_softmax(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double hi = z.row(i).maxCoeff();
    out.row(i) = (z.row(i).array() - hi).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

/// -log softmax over columns of sim / beta.
inline Matrix contrastive_from_similarity(const Matrix& sim, double beta) {
  const Matrix z = sim / beta;
  const Vector lse = row_logsumexp(z);
  return (-z).colwise() + lse;
}

inline void check_same_dim(const FeatureSequence& x, const FeatureSequence& y) {
  if (x.dim() != y.dim()) {
    throw InvalidArgument("feature dimension mismatch: " + std::to_string(x.dim()) +
                          " vs " + std::to_string(y.dim()));
  }
}

inline void check_normalized(const FeatureSequence& s, const char* name) {
  if (!s.is_normalized(1e-6)) {
    throw InvalidArgument(std::string(name) + " must have unit-norm columns");
  }
}

}  // namespace detail

/// Softmax(-a/gamma)-weighted mean of a; the exact minimum at gamma = 0.
/// Always lies in [min(a), max(a)].
inline double smooth_min(std::span<const double> a, double gamma) {
  detail::check_operands(a, gamma);
  if (a.size() == 1 || gamma == 0.0) return a[detail::argmin(a)];
  return detail::smooth_value_unchecked(a, {gamma, OperatorKind::SmoothMin});
}

/// -gamma log sum exp(-a/gamma); the exact minimum at gamma = 0.
/// Bounded below by min(a) - gamma log N.
inline double min_gamma(std::span<const double> a, double gamma) {
  detail::check_operands(a, gamma);
  if (a.size() == 1 || gamma == 0.0) return a[detail::argmin(a)];
  return detail::smooth_value_unchecked(a, {gamma, OperatorKind::MinGamma});
}

/// Relaxed value minus the true minimum: the implicit per-cell path penalty.
/// Satisfies penalty(a; gamma) == gamma * penalty(a / gamma; 1).
inline double smooth_min_penalty(std::span<const double> a, double gamma, OperatorKind kind) {
  detail::check_operands(a, gamma);
  if (a.size() == 1 || gamma == 0.0) return 0.0;
  switch (kind) {
    case OperatorKind::HardMin: return 0.0;
    case OperatorKind::SmoothMin: return detail::smooth_min_penalty_unchecked(a, gamma);
    case OperatorKind::MinGamma: return detail::min_gamma_penalty_unchecked(a, gamma);
  }
  return 0.0;
}

/// Dispatch on the configured operator.
inline double smooth_value(std::span<const double> a, const SmoothMinConfig& cfg) {
  detail::check_operands(a, cfg.gamma);
  return detail::smooth_value_unchecked(a, cfg);
}

/// Root x(n) >= 1 of x - 1 = (n - 1) exp(-x). The largest smoothMin penalty
/// over n-vectors at unit temperature is x(n) - 1.
inline double penalty_max_root(int n) {
  if (n < 1) throw InvalidArgument("penalty_max_root needs n >= 1");
  if (n == 1) return 1.0;
  const double m = static_cast<double>(n - 1);
  auto f = [m](double x) { return x - 1.0 - m * std::exp(-x); };
  double lo = 1.0;
  double hi = std::log(static_cast<double>(n) + 1.0) + 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return std::abs(f(lo)) <= std::abs(f(hi)) ? lo : hi;
}

inline FeatureSequence l2_normalize(const FeatureSequence& seq) {
  Matrix out = seq.matrix();
  for (Eigen::Index i = 0; i < out.cols(); ++i) {
    const double n = out.col(i).norm();
    if (n == 0.0) {
      throw DegenerateInput("column " + std::to_string(i) + " has zero norm");
    }
    out.col(i) /= n;
  }
  return FeatureSequence(std::move(out));
}

/// c(i, j) = -log softmax_j(x_i . y_j / beta). Each row of exp(-c) is a
/// distribution over the target sequence, so the result is not symmetric.
inline CostMatrix contrastive_cost(const FeatureSequence& x, const FeatureSequence& y,
                                   double beta,
                                   CostDirection direction = CostDirection::XToY) {
  detail::check_same_dim(x, y);
  detail::check_normalized(x, "source sequence");
  detail::check_normalized(y, "target sequence");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidArgument("beta must be positive");
  const Matrix sim = x.matrix().transpose() * y.matrix();
  return {detail::contrastive_from_similarity(sim, beta), beta, direction};
}

/// Non-contrastive baseline: c(i, j) = -cos(x_i, y_j).
inline CostMatrix cosine_cost(const FeatureSequence& x, const FeatureSequence& y,
                              CostDirection direction = CostDirection::XToY) {
  detail::check_same_dim(x, y);
  detail::check_normalized(x, "source sequence");
  detail::check_normalized(y, "target sequence");
  return {-(x.matrix().transpose() * y.matrix()), 0.0, direction};
}

}  // namespace smoothdtw
