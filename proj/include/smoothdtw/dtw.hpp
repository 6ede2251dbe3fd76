#pragma once

// The alignment recurrence R(i,j) = c(i,j) + s(predecessors), its losses,
// hard-path backtracking and an exhaustive path enumerator.

#include <array>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "smoothdtw/core_ops.hpp"

namespace smoothdtw {

struct AccumulatedCostMatrix {
  Matrix values;
  SmoothMinConfig config;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  double final_cost() const { return values(values.rows() - 1, values.cols() - 1); }
};

/// Index pair into a cost matrix; zero-based in the C++ API.
struct Cell {
  Eigen::Index i = 0;
  Eigen::Index j = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Monotone, continuous, endpoint-matched sequence of cells.
struct AlignmentPath {
  std::vector<Cell> steps;

  std::size_t size() const { return steps.size(); }
  friend bool operator==(const AlignmentPath&, const AlignmentPath&) = default;
};

/// Predecessors of (i, j) in the fixed order diagonal, vertical, horizontal.
/// Out-of-range cells are omitted rather than carried as infinities.
struct Predecessors {
  std::array<Cell, 3> cells{};
  int count = 0;
};

inline Predecessors predecessors(Eigen::Index i, Eigen::Index j) {
  Predecessors p;
  if (i > 0 && j > 0) p.cells[p.count++] = {i - 1, j - 1};
  if (i > 0) p.cells[p.count++] = {i - 1, j};
  if (j > 0) p.cells[p.count++] = {i, j - 1};
  return p;
}

inline bool is_feasible(const AlignmentPath& path, Eigen::Index rows, Eigen::Index cols) {
  if (path.steps.empty()) return false;
  if (path.steps.front() != Cell{0, 0}) return false;
  if (path.steps.back() != Cell{rows - 1, cols - 1}) return false;
  for (std::size_t k = 1; k < path.steps.size(); ++k) {
    const auto di = path.steps[k].i - path.steps[k - 1].i;
    const auto dj = path.steps[k].j - path.steps[k - 1].j;
    if (di < 0 || di > 1 || dj < 0 || dj > 1 || (di == 0 && dj == 0)) return false;
  }
  return true;
}

inline double path_cost(const Matrix& cost, const AlignmentPath& path) {
  double total = 0.0;
  for (const auto& c : path.steps) total += cost(c.i, c.j);
  return total;
}

namespace detail {

inline void check_cost(const Matrix& c) {
  if (c.rows() < 1 || c.cols() < 1) throw InvalidArgument("empty cost matrix");
  if (!c.allFinite()) throw InvalidArgument("cost matrix has a non-finite entry");
}

inline Matrix accumulate_values(const Matrix& cost, const SmoothMinConfig& cfg) {
  const Eigen::Index m = cost.rows();
  const Eigen::Index n = cost.cols();
  Matrix r(m, n);
  std::array<double, 3> args{};
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == 0 && j == 0) {
        r(0, 0) = cost(0, 0);
        continue;
      }
      const auto p = predecessors(i, j);
      for (int k = 0; k < p.count; ++k) args[k] = r(p.cells[k].i, p.cells[k].j);
      r(i, j) = cost(i, j) + smooth_value_unchecked({args.data(), std::size_t(p.count)}, cfg);
    }
  }
  return r;
}

}  // namespace detail

/// Row-major dynamic program over the cost matrix.
inline AccumulatedCostMatrix accumulate(const Matrix& cost, const SmoothMinConfig& cfg) {
  detail::check_cost(cost);
  if (!(cfg.gamma >= 0.0) || !std::isfinite(cfg.gamma)) {
    throw InvalidArgument("temperature must be finite and non-negative");
  }
  return {detail::accumulate_values(cost, cfg), cfg};
}

inline AccumulatedCostMatrix accumulate(const CostMatrix& cost, const SmoothMinConfig& cfg) {
  return accumulate(cost.values, cfg);
}

/// R(M, N) for the contrastive cost of matching x to y.
inline double alignment_loss(const FeatureSequence& x, const FeatureSequence& y, double gamma,
                             double beta, OperatorKind kind) {
  return accumulate(contrastive_cost(x, y, beta), {gamma, kind}).final_cost();
}

/// alignment_loss(x, y) + alignment_loss(y, x).
inline double symmetric_alignment_loss(const FeatureSequence& x, const FeatureSequence& y,
                                       double gamma, double beta, OperatorKind kind) {
  return alignment_loss(x, y, gamma, beta, kind) + alignment_loss(y, x, gamma, beta, kind);
}

/// Optimal path under the exact minimum. Backtracking prefers the diagonal,
/// then vertical, then horizontal predecessor on ties.
inline AlignmentPath hard_path(const Matrix& cost) {
  detail::check_cost(cost);
  const Matrix r = detail::accumulate_values(cost, {0.0, OperatorKind::HardMin});
  AlignmentPath path;
  Cell at{cost.rows() - 1, cost.cols() - 1};
  path.steps.push_back(at);
  while (at.i > 0 || at.j > 0) {
    const auto p = predecessors(at.i, at.j);
    Cell best = p.cells[0];
    for (int k = 1; k < p.count; ++k) {
      if (r(p.cells[k].i, p.cells[k].j) < r(best.i, best.j)) best = p.cells[k];
    }
    at = best;
    path.steps.push_back(at);
  }
  std::reverse(path.steps.begin(), path.steps.end());
  return path;
}

inline AlignmentPath hard_path(const CostMatrix& cost) { return hard_path(cost.values); }

struct BruteForceResult {
  double cost = 0.0;
  AlignmentPath path;
};

/// Exact optimum by enumerating every feasible path. Test oracle only;
/// refuses M + N > 14.
inline BruteForceResult brute_force_dtw(const Matrix& cost) {
  detail::check_cost(cost);
  if (cost.rows() + cost.cols() > 14) {
    throw ResourceLimit("brute_force_dtw is limited to M + N <= 14");
  }
  const Cell end{cost.rows() - 1, cost.cols() - 1};
  BruteForceResult best{std::numeric_limits<double>::infinity(), {}};
  std::vector<Cell> stack{{0, 0}};
  std::function<void(double)> walk = [&](double acc) {
    const Cell at = stack.back();
    if (at == end) {
      if (acc < best.cost) best = {acc, AlignmentPath{stack}};
      return;
    }
    constexpr std::array<std::pair<int, int>, 3> moves{{{1, 1}, {1, 0}, {0, 1}}};
    for (auto [di, dj] : moves) {
      const Cell next{at.i + di, at.j + dj};
      if (next.i > end.i || next.j > end.j) continue;
      stack.push_back(next);
      walk(acc + cost(next.i, next.j));
      stack.pop_back();
    }
  };
  walk(cost(0, 0));
  return best;
}

inline BruteForceResult brute_force_dtw(const CostMatrix& cost) {
  return brute_force_dtw(cost.values);
}

/// Cost used to synchronize two learned embedding sequences at inference
/// time: the mean of both directional contrastive costs.
inline Matrix synchronization_cost(const FeatureSequence& u, const FeatureSequence& v,
                                   double beta) {
  return 0.5 * (contrastive_cost(u, v, beta).values +
                contrastive_cost(v, u, beta, CostDirection::YToX).values.transpose());
}

inline AlignmentPath synchronize(const FeatureSequence& u, const FeatureSequence& v, double beta) {
  return hard_path(synchronization_cost(u, v, beta));
}

}  // namespace smoothdtw
