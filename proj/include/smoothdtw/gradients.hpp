#pragma once

// Reverse-mode derivatives of the combined objective with respect to the raw
// (pre-normalization) embedding sequences, and a central-difference verifier.
//
// The graph is fixed once (M, N) is known, so the backward pass is written out
// by hand: normalization -> similarity -> cost softmax -> recurrence ->
// prefix-match softmax -> composition -> loss, then the adjoints in reverse.

#include <vector>

#include "smoothdtw/cycle.hpp"

namespace smoothdtw {

struct LossGradients {
  Matrix d_x;
  Matrix d_y;
  double loss_value = 0.0;
};

namespace detail {

inline void smooth_min_grad_unchecked(std::span<const double> a, const SmoothMinConfig& cfg,
                                      std::span<double> out) {
  const std::size_t k0 = argmin(a);
  if (a.size() == 1 || cfg.effective_kind() == OperatorKind::HardMin) {
    std::fill(out.begin(), out.end(), 0.0);
    out[k0] = 1.0;
    return;
  }
  const double lo = a[k0];
  double den = 0.0;
  double num = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    out[k] = std::exp(-(a[k] - lo) / cfg.gamma);
    den += out[k];
    num += (a[k] - lo) * out[k];
  }
  const double penalty = num / den;
  for (std::size_t k = 0; k < a.size(); ++k) {
    out[k] /= den;
    if (cfg.kind == OperatorKind::SmoothMin) {
      out[k] *= 1.0 + (penalty - (a[k] - lo)) / cfg.gamma;
    }
  }
}

inline void require_finite(const Matrix& m, const char* stage) {
  if (!m.allFinite()) throw NumericFailure(stage, "non-finite value");
}

/// Adjoint of the recurrence: maps dL/dR to dL/dC, visiting cells in reverse.
inline Matrix accumulate_backward(const Matrix& r, const SmoothMinConfig& cfg, Matrix grad_r) {
  const Eigen::Index m = r.rows();
  const Eigen::Index n = r.cols();
  Matrix grad_c(m, n);
  std::array<double, 3> args{};
  std::array<double, 3> w{};
  for (Eigen::Index i = m - 1; i >= 0; --i) {
    for (Eigen::Index j = n - 1; j >= 0; --j) {
      const double g = grad_r(i, j);
      grad_c(i, j) = g;
      if (i == 0 && j == 0) continue;
      const auto p = predecessors(i, j);
      for (int k = 0; k < p.count; ++k) args[k] = r(p.cells[k].i, p.cells[k].j);
      smooth_min_grad_unchecked({args.data(), std::size_t(p.count)}, cfg,
                                {w.data(), std::size_t(p.count)});
      for (int k = 0; k < p.count; ++k) grad_r(p.cells[k].i, p.cells[k].j) += g * w[k];
    }
  }
  return grad_c;
}

/// Adjoint of q = row_softmax(z).
inline Matrix row_softmax_backward(const Matrix& q, const Matrix& grad_q) {
  const Vector inner = (q.array() * grad_q.array()).rowwise().sum();
  return q.array() * (grad_q.colwise() - inner).array();
}

/// Adjoint of c = contrastive_from_similarity(sim, beta) with respect to sim.
inline Matrix contrastive_backward(const Matrix& sim, double beta, const Matrix& grad_c) {
  const Matrix q = row_softmax(sim / beta);
  const Vector row_total = grad_c.rowwise().sum();
  return ((q.array().colwise() * row_total.array()) - grad_c.array()).matrix() / beta;
}

/// Adjoint of column-wise L2 normalization.
inline Matrix normalize_backward(const Matrix& unit, const Vector& norms, const Matrix& grad_unit) {
  Matrix out(unit.rows(), unit.cols());
  for (Eigen::Index i = 0; i < unit.cols(); ++i) {
    const double along = unit.col(i).dot(grad_unit.col(i));
    out.col(i) = (grad_unit.col(i) - along * unit.col(i)) / norms(i);
  }
  return out;
}

inline void normalize_columns(const Matrix& raw, Matrix& unit, Vector& norms) {
  norms = raw.colwise().norm().transpose();
  for (Eigen::Index i = 0; i < raw.cols(); ++i) {
    if (norms(i) == 0.0) {
      throw DegenerateInput("column " + std::to_string(i) + " has zero norm");
    }
  }
  unit = raw.array().rowwise() / norms.transpose().array();
}

}  // namespace detail

/// Gradient of the relaxed minimum with respect to its arguments.
/// smoothMin: w_k (1 + (s - a_k) / gamma); min^gamma: w_k; w = softmax(-a / gamma).
inline std::vector<double> smooth_min_grad(std::span<const double> a, double gamma,
                                           OperatorKind kind) {
  detail::check_operands(a, gamma);
  if (gamma == 0.0) throw InvalidArgument("smooth minimum is not differentiable at gamma = 0");
  std::vector<double> out(a.size());
  detail::smooth_min_grad_unchecked(a, {gamma, kind}, out);
  return out;
}

/// Combined objective evaluated on raw sequences; normalization is part of the graph.
inline double total_loss_unnormalized(const FeatureSequence& x, const FeatureSequence& y,
                                      const LossConfig& cfg) {
  return total_loss(l2_normalize(x), l2_normalize(y), cfg);
}

/// Exact gradient of the combined objective with respect to the raw inputs.
inline LossGradients loss_gradients(const FeatureSequence& x, const FeatureSequence& y,
                                    const LossConfig& cfg) {
  cfg.validate();
  if (cfg.gamma == 0.0) {
    throw InvalidArgument("loss gradients need gamma > 0 (hard minimum is not differentiable)");
  }
  detail::check_same_dim(x, y);
  using namespace detail;

  Matrix xu, yu;
  Vector xn, yn;
  normalize_columns(x.matrix(), xu, xn);
  normalize_columns(y.matrix(), yu, yn);
  const Matrix sim = xu.transpose() * yu;

  const bool contrastive = cfg.cost == CostKind::Contrastive;
  const Matrix c_xy = contrastive ? contrastive_from_similarity(sim, cfg.beta) : Matrix(-sim);
  const Matrix sim_t = sim.transpose();
  const Matrix c_yx = contrastive ? contrastive_from_similarity(sim_t, cfg.beta) : Matrix(-sim_t);
  require_finite(c_xy, "cost");
  require_finite(c_yx, "cost");

  const SmoothMinConfig smooth = cfg.smooth();
  const Matrix r_xy = accumulate_values(c_xy, smooth);
  const Matrix r_yx = accumulate_values(c_yx, smooth);
  require_finite(r_xy, "recurrence");
  require_finite(r_yx, "recurrence");

  const Eigen::Index m = sim.rows();
  const Eigen::Index n = sim.cols();
  const Matrix q_xy = row_softmax(-r_xy / cfg.alpha);  // M x N
  const Matrix q_yx = row_softmax(-r_yx / cfg.alpha);  // N x M

  Matrix grad_q_xy = Matrix::Zero(m, n);
  Matrix grad_q_yx = Matrix::Zero(n, m);
  double gcc = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double diag = q_xy.row(i).dot(q_yx.col(i));
    if (diag >= 1.0) continue;
    if (diag > kCycleDiagonalFloor) {
      gcc -= std::log(diag);
      const double g = -cfg.lambda_g / diag;
      grad_q_xy.row(i) += g * q_yx.col(i).transpose();
      grad_q_yx.col(i) += g * q_xy.row(i).transpose();
    } else {
      gcc -= std::log(kCycleDiagonalFloor);
    }
  }

  LossGradients out;
  out.loss_value = cfg.lambda_g * gcc + cfg.lambda_s * (r_xy(m - 1, n - 1) + r_yx(n - 1, m - 1));
  if (!std::isfinite(out.loss_value)) throw NumericFailure("loss", "non-finite loss value");

  Matrix grad_r_xy = -row_softmax_backward(q_xy, grad_q_xy) / cfg.alpha;
  Matrix grad_r_yx = -row_softmax_backward(q_yx, grad_q_yx) / cfg.alpha;
  grad_r_xy(m - 1, n - 1) += cfg.lambda_s;
  grad_r_yx(n - 1, m - 1) += cfg.lambda_s;
  require_finite(grad_r_xy, "match-probability backward");
  require_finite(grad_r_yx, "match-probability backward");

  const Matrix grad_c_xy = accumulate_backward(r_xy, smooth, std::move(grad_r_xy));
  const Matrix grad_c_yx = accumulate_backward(r_yx, smooth, std::move(grad_r_yx));
  require_finite(grad_c_xy, "recurrence backward");
  require_finite(grad_c_yx, "recurrence backward");

  Matrix grad_sim;
  if (contrastive) {
    grad_sim = contrastive_backward(sim, cfg.beta, grad_c_xy) +
               contrastive_backward(sim_t, cfg.beta, grad_c_yx).transpose();
  } else {
    grad_sim = -grad_c_xy - grad_c_yx.transpose();
  }
  require_finite(grad_sim, "cost backward");

  out.d_x = normalize_backward(xu, xn, yu * grad_sim.transpose());
  out.d_y = normalize_backward(yu, yn, xu * grad_sim);
  require_finite(out.d_x, "normalization backward");
  require_finite(out.d_y, "normalization backward");
  return out;
}

/// Worst relative error between loss_gradients and central differences over
/// every input coordinate. Denominator is max(|analytic|, |numeric|, 1e-8).
inline double finite_difference_check(const FeatureSequence& x, const FeatureSequence& y,
                                       const LossConfig& cfg, double step) {
  if (!(step > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  const LossGradients analytic = loss_gradients(x, y, cfg);
  double worst = 0.0;
  auto sweep = [&](const Matrix& base, const Matrix& grad, bool perturb_x) {
    Matrix probe = base;
    for (Eigen::Index c = 0; c < base.cols(); ++c) {
      for (Eigen::Index r = 0; r < base.rows(); ++r) {
        const double keep = probe(r, c);
        probe(r, c) = keep + step;
        const double up = perturb_x ? total_loss_unnormalized(FeatureSequence(probe), y, cfg)
                                    : total_loss_unnormalized(x, FeatureSequence(probe), cfg);
        probe(r, c) = keep - step;
        const double down = perturb_x ? total_loss_unnormalized(FeatureSequence(probe), y, cfg)
                                      : total_loss_unnormalized(x, FeatureSequence(probe), cfg);
        probe(r, c) = keep;
        const double numeric = (up - down) / (2.0 * step);
        const double a = grad(r, c);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
    }
  };
  sweep(x.matrix(), analytic.d_x, true);
  sweep(y.matrix(), analytic.d_y, false);
  return worst;
}

}  // namespace smoothdtw
