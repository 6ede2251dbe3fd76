#pragma once

// Prefix-match probabilities derived from accumulated costs, their two-way
// composition, the global cycle-consistency loss and the combined objective.

#include "smoothdtw/dtw.hpp"

namespace smoothdtw {

/// N x M matrix whose column m is a distribution over target prefixes n.
struct MatchProbabilityMatrix {
  Matrix values;
  double alpha = 1.0;
};

/// Lower clamp applied to composed diagonal entries before taking the log.
inline constexpr double kCycleDiagonalFloor = 1e-12;

enum class CostKind { Contrastive, Cosine };

inline std::string_view to_string(CostKind kind) {
  return kind == CostKind::Contrastive ? "contrastive" : "cosine";
}

inline CostKind cost_kind_from_string(std::string_view name) {
  if (name == "contrastive") return CostKind::Contrastive;
  if (name == "cosine") return CostKind::Cosine;
  throw InvalidArgument("unknown cost kind '" + std::string(name) + "'");
}

struct LossConfig {
  double lambda_g = 1.0;
  double lambda_s = 0.1;
  double gamma = 0.1;
  double beta = 0.1;
  double alpha = 1.0;
  OperatorKind kind = OperatorKind::SmoothMin;
  CostKind cost = CostKind::Contrastive;

  SmoothMinConfig smooth() const { return {gamma, kind}; }

  void validate() const {
    auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
    auto pos = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!nonneg(lambda_g) || !nonneg(lambda_s)) {
      throw ConfigError("loss weights must be finite and non-negative");
    }
    if (!nonneg(gamma)) throw ConfigError("gamma must be finite and non-negative");
    if (cost == CostKind::Contrastive && !pos(beta)) throw ConfigError("beta must be positive");
    if (!pos(alpha)) throw ConfigError("alpha must be positive");
  }
};

/// Column i of the result is softmax_j(-R(i, j) / alpha).
inline MatchProbabilityMatrix match_probabilities(const AccumulatedCostMatrix& r, double alpha) {
  if (!r.values.allFinite()) throw InvalidArgument("accumulated costs must be finite");
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  return {detail::row_softmax(-r.values / alpha).transpose(), alpha};
}

/// p_yx * p_xy: the M x M round-trip distribution over source elements.
inline Matrix compose(const MatchProbabilityMatrix& p_yx, const MatchProbabilityMatrix& p_xy) {
  if (p_yx.values.cols() != p_xy.values.rows()) {
    throw InvalidArgument("compose: inner dimensions differ");
  }
  return p_yx.values * p_xy.values;
}

/// -sum_i log(A_ii) with diagonal entries clamped to [kCycleDiagonalFloor, 1].
inline double cycle_cross_entropy(const Matrix& composed) {
  if (composed.rows() != composed.cols()) throw InvalidArgument("composed matrix must be square");
  double total = 0.0;
  for (Eigen::Index i = 0; i < composed.rows(); ++i) {
    total -= std::log(std::clamp(composed(i, i), kCycleDiagonalFloor, 1.0));
  }
  return total;
}

namespace detail {

inline Matrix pair_cost(const FeatureSequence& x, const FeatureSequence& y, CostKind kind,
                        double beta, CostDirection dir) {
  return kind == CostKind::Contrastive ? contrastive_cost(x, y, beta, dir).values
                                       : cosine_cost(x, y, dir).values;
}

}  // namespace detail

/// Individual terms of the combined objective for one pair.
struct LossTerms {
  double align_xy = 0.0;
  double align_yx = 0.0;
  double gcc = 0.0;
  double total = 0.0;
};

inline LossTerms loss_terms(const FeatureSequence& x, const FeatureSequence& y,
                            const LossConfig& cfg) {
  cfg.validate();
  const auto r_xy =
      accumulate(detail::pair_cost(x, y, cfg.cost, cfg.beta, CostDirection::XToY), cfg.smooth());
  const auto r_yx =
      accumulate(detail::pair_cost(y, x, cfg.cost, cfg.beta, CostDirection::YToX), cfg.smooth());
  LossTerms t;
  t.align_xy = r_xy.final_cost();
  t.align_yx = r_yx.final_cost();
  const auto p_xy = match_probabilities(r_xy, cfg.alpha);
  const auto p_yx = match_probabilities(r_yx, cfg.alpha);
  t.gcc = cycle_cross_entropy(compose(p_yx, p_xy));
  t.total = cfg.lambda_g * t.gcc + cfg.lambda_s * (t.align_xy + t.align_yx);
  return t;
}

inline double gcc_loss(const FeatureSequence& x, const FeatureSequence& y, double gamma,
                       double beta, double alpha, OperatorKind kind) {
  LossConfig cfg;
  cfg.gamma = gamma;
  cfg.beta = beta;
  cfg.alpha = alpha;
  cfg.kind = kind;
  return loss_terms(x, y, cfg).gcc;
}

/// lambda_g * gcc + lambda_s * (align(x, y) + align(y, x)).
inline double total_loss(const FeatureSequence& x, const FeatureSequence& y,
                         const LossConfig& cfg) {
  return loss_terms(x, y, cfg).total;
}

}  // namespace smoothdtw
