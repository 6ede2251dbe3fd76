#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "smoothdtw/errors.hpp"

namespace smoothdtw {

struct AdamParams {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer over a flat parameter vector. No weight decay,
/// no schedule.
class Adam {
 public:
  Adam() = default;
  Adam(AdamParams params, std::size_t n) : params_(params), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> x, std::span<const double> grad) {
    if (x.size() != m_.size() || grad.size() != m_.size()) {
      throw InvalidArgument("optimizer state size mismatch");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(params_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(params_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < x.size(); ++i) {
      m_[i] = params_.beta1 * m_[i] + (1.0 - params_.beta1) * grad[i];
      v_[i] = params_.beta2 * v_[i] + (1.0 - params_.beta2) * grad[i] * grad[i];
      x[i] -= params_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + params_.epsilon);
    }
  }

  const AdamParams& params() const { return params_; }
  std::uint64_t steps_taken() const { return t_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }

  void restore(std::uint64_t t, std::vector<double> m, std::vector<double> v) {
    if (m.size() != m_.size() || v.size() != v_.size()) {
      throw InvalidArgument("optimizer state size mismatch");
    }
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  AdamParams params_;
  std::uint64_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace smoothdtw
