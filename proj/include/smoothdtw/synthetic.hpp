#pragma once

// Paired sequences that share a latent process but differ in execution rate
// (a monotone time warp) and appearance (an orthogonal mixing of the process
// state with a sequence-specific signal, plus noise).
// Warps and phase labels are kept as ground truth for evaluation only.

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "smoothdtw/core_ops.hpp"

namespace smoothdtw {

using Prng = std::mt19937_64;

/// Smooth piecewise curve over canonical time [0, 1]. Phase k runs from
/// boundaries[k] to boundaries[k + 1] and bends from anchors[k] to
/// anchors[k + 1] along a parabolic bump that vanishes at both ends.
struct LatentProcess {
  std::vector<double> boundaries;  // K + 1 values, 0 = b_0 < ... < b_K = 1
  Matrix anchors;                  // d_latent x (K + 1)
  Matrix bumps;                    // d_latent x K
  Matrix trajectory;               // d_latent x L, sampled at l / (L - 1)
  std::vector<int> phase_labels;   // one per trajectory column

  int phases() const { return static_cast<int>(bumps.cols()); }
  Eigen::Index latent_dim() const { return anchors.rows(); }

  int phase_at(double t) const {
    const int k = static_cast<int>(
        std::upper_bound(boundaries.begin() + 1, boundaries.end() - 1, t) - boundaries.begin() - 1);
    return std::clamp(k, 0, phases() - 1);
  }

  /// Position on the curve for phase k at local coordinate s in [0, 1].
  Vector at_phase(int k, double s) const {
    return (1.0 - s) * anchors.col(k) + s * anchors.col(k + 1) +
           4.0 * s * (1.0 - s) * bumps.col(k);
  }

  Vector at(double t) const {
    const int k = phase_at(t);
    const double s = (t - boundaries[k]) / (boundaries[k + 1] - boundaries[k]);
    return at_phase(k, s);
  }
};

/// Canonical grid coordinate of sample l out of n.
inline double grid_time(Eigen::Index l, Eigen::Index n) {
  return n == 1 ? 0.0 : static_cast<double>(l) / static_cast<double>(n - 1);
}

inline LatentProcess make_process(std::vector<double> boundaries, Matrix anchors, Matrix bumps,
                                  int length) {
  LatentProcess p{std::move(boundaries), std::move(anchors), std::move(bumps), {}, {}};
  p.trajectory.resize(p.latent_dim(), length);
  p.phase_labels.resize(length);
  for (int l = 0; l < length; ++l) {
    const double t = grid_time(l, length);
    p.trajectory.col(l) = p.at(t);
    p.phase_labels[l] = p.phase_at(t);
  }
  return p;
}

/// Random process: anchors follow a random walk, phases get random durations
/// (each at least one grid step) and random bumps.
inline LatentProcess generate_process(int k_phases, int d_latent, int length, Prng& rng) {
  if (k_phases < 1 || d_latent < 1 || length < k_phases) {
    throw InvalidArgument("generate_process needs k >= 1, d >= 1 and length >= k");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.5, 1.5);

  // Phase k starts at grid index first[k]; boundaries sit halfway between grid
  // points so that every phase owns at least one sample.
  std::vector<double> weights(k_phases);
  for (auto& w : weights) w = unit(rng);
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  const int last = length - 1;
  std::vector<double> boundaries{0.0};
  int prev_first = 0;
  double acc = 0.0;
  for (int k = 1; k < k_phases; ++k) {
    acc += weights[k - 1] / total;
    const int first = std::clamp(static_cast<int>(std::lround(acc * last)), prev_first + 1,
                                 last - (k_phases - 1 - k));
    boundaries.push_back((first - 0.5) / last);
    prev_first = first;
  }
  boundaries.push_back(1.0);

  Matrix anchors(d_latent, k_phases + 1);
  Vector pos(d_latent);
  for (int d = 0; d < d_latent; ++d) pos(d) = normal(rng);
  anchors.col(0) = pos;
  for (int k = 1; k <= k_phases; ++k) {
    Vector step(d_latent);
    for (int d = 0; d < d_latent; ++d) step(d) = normal(rng);
    pos += 1.5 * step.normalized();
    anchors.col(k) = pos;
  }
  Matrix bumps(d_latent, k_phases);
  for (int k = 0; k < k_phases; ++k)
    for (int d = 0; d < d_latent; ++d) bumps(d, k) = 0.5 * normal(rng);
  return make_process(std::move(boundaries), std::move(anchors), std::move(bumps), length);
}

/// Piecewise-linear map from normalized observed time u in [0, 1] to canonical
/// time. Segment k spans [knots[k-1], knots[k]] (with implicit 0 and 1 ends)
/// and advances canonical time at rate proportional to speeds[k].
struct WarpParams {
  std::vector<double> knots;   // interior, strictly increasing in (0, 1)
  std::vector<double> speeds;  // knots.size() + 1 positive rates

  void validate() const {
    if (speeds.size() != knots.size() + 1) {
      throw InvalidArgument("warp needs one speed per segment");
    }
    double prev = 0.0;
    for (double k : knots) {
      if (!(k > prev) || !(k < 1.0)) throw InvalidArgument("warp knots must increase within (0, 1)");
      prev = k;
    }
    for (double s : speeds) {
      if (!(s > 0.0) || !std::isfinite(s)) throw InvalidArgument("warp speeds must be positive");
    }
  }

  static WarpParams identity() { return {{}, {1.0}}; }
};

/// Breakpoints (u, t) of the warp, both coordinates strictly increasing from 0 to 1.
inline std::vector<std::pair<double, double>> warp_breakpoints(const WarpParams& w) {
  w.validate();
  std::vector<double> u{0.0};
  u.insert(u.end(), w.knots.begin(), w.knots.end());
  u.push_back(1.0);
  std::vector<double> t{0.0};
  for (std::size_t k = 0; k + 1 < u.size(); ++k) t.push_back(t.back() + w.speeds[k] * (u[k + 1] - u[k]));
  const double total = t.back();
  std::vector<std::pair<double, double>> out;
  for (std::size_t k = 0; k < u.size(); ++k) out.emplace_back(u[k], t[k] / total);
  out.back().second = 1.0;
  return out;
}

inline double warp_eval(const std::vector<std::pair<double, double>>& bp, double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  const auto it = std::upper_bound(bp.begin(), bp.end(), u,
                                   [](double v, const auto& p) { return v < p.first; });
  const auto& [u1, t1] = *it;
  const auto& [u0, t0] = *(it - 1);
  return t0 + (t1 - t0) * (u - u0) / (u1 - u0);
}

/// Canonical time of every observed frame.
inline std::vector<double> warp_frame_times(const WarpParams& w, int length) {
  const auto bp = warp_breakpoints(w);
  std::vector<double> times(length);
  for (int i = 0; i < length; ++i) times[i] = warp_eval(bp, grid_time(i, length));
  return times;
}

inline WarpParams random_warp(int knots, double speed_min, double speed_max, Prng& rng) {
  if (knots < 0 || !(speed_min > 0.0) || !(speed_max >= speed_min)) {
    throw InvalidArgument("invalid warp distribution");
  }
  std::uniform_real_distribution<double> pos(0.0, 1.0);
  std::uniform_real_distribution<double> log_speed(std::log(speed_min), std::log(speed_max));
  WarpParams w;
  // Evenly spaced knots jittered by less than half a cell stay strictly increasing.
  for (int k = 0; k < knots; ++k) w.knots.push_back((k + 1 + 0.8 * (pos(rng) - 0.5)) / (knots + 1));
  for (int k = 0; k <= knots; ++k) w.speeds.push_back(std::exp(log_speed(rng)));
  return w;
}

/// Random obs_dim x obs_dim orthogonal matrix. strength = 0 gives the
/// identity; large strengths approach a uniformly random rotation.
inline Matrix random_mixing(Eigen::Index obs_dim, double strength, Prng& rng) {
  if (obs_dim < 1) throw InvalidArgument("observed dim must be positive");
  if (!(strength >= 0.0)) throw InvalidArgument("mixing strength must be non-negative");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a = Matrix::Identity(obs_dim, obs_dim);
  for (Eigen::Index c = 0; c < obs_dim; ++c)
    for (Eigen::Index r = 0; r < obs_dim; ++r) a(r, c) += strength * normal(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(obs_dim, obs_dim);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index c = 0; c < obs_dim; ++c) {
    if (r(c, c) < 0.0) q.col(c) *= -1.0;
  }
  return q;
}

/// Sequence-specific appearance signal, unrelated to the process: one sinusoid
/// per dimension over normalized observed time.
struct AppearanceParams {
  Vector frequency;  // cycles per sequence
  Vector phase;
  double amplitude = 0.0;

  Eigen::Index dims() const { return frequency.size(); }

  Vector at(double u) const {
    return amplitude * (2.0 * std::numbers::pi * frequency.array() * u + phase.array()).sin();
  }
};

inline AppearanceParams random_appearance(Eigen::Index dims, double amplitude, Prng& rng) {
  if (dims < 0 || !(amplitude >= 0.0)) throw InvalidArgument("invalid appearance distribution");
  std::uniform_real_distribution<double> freq(0.5, 2.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  AppearanceParams a{Vector(dims), Vector(dims), amplitude};
  for (Eigen::Index d = 0; d < dims; ++d) {
    a.frequency(d) = freq(rng);
    a.phase(d) = phase(rng);
  }
  return a;
}

/// The first d_latent columns of `mixing` carry the process, the remaining
/// ones the appearance signal. Columns are orthonormal.
struct NuisanceParams {
  Matrix mixing;
  AppearanceParams appearance;
};

struct Observation {
  FeatureSequence observed;
  std::vector<double> canonical_time;
  std::vector<int> phases;
};

/// mixing * [process(warp(u)); appearance(u)] + noise at `length` evenly spaced observed times.
inline Observation warp_and_observe(const LatentProcess& process, const WarpParams& warp,
                                    const NuisanceParams& nuisance, double noise_sigma,
                                    int length, Prng& rng) {
  warp.validate();
  if (length < 1) throw InvalidArgument("observed length must be positive");
  const Eigen::Index d = process.latent_dim();
  const Eigen::Index extra = nuisance.appearance.dims();
  if (nuisance.mixing.cols() != d + extra) {
    throw InvalidArgument("mixing does not match the latent plus appearance dimension");
  }
  if (nuisance.mixing.rows() < process.latent_dim()) {
    throw InvalidArgument("observed dim must be >= latent dim");
  }
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise sigma must be non-negative");
  Observation out;
  out.canonical_time = warp_frame_times(warp, length);
  Matrix obs(nuisance.mixing.rows(), length);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < length; ++i) {
    const double t = out.canonical_time[i];
    out.phases.push_back(process.phase_at(t));
    obs.col(i) = nuisance.mixing.leftCols(d) * process.at(t);
    if (extra > 0) obs.col(i) += nuisance.mixing.rightCols(extra) * nuisance.appearance.at(grid_time(i, length));
    if (noise_sigma > 0.0) {
      for (Eigen::Index d = 0; d < obs.rows(); ++d) obs(d, i) += noise_sigma * normal(rng);
    }
  }
  out.observed = FeatureSequence(std::move(obs));
  return out;
}

struct DatasetConfig {
  int n_processes = 10;
  int sequences_per_process = 20;
  int k_phases = 4;
  int d_latent = 4;
  int observed_dim = 16;
  int min_length = 40;
  int max_length = 80;
  int canonical_length = 200;
  int warp_knots = 5;
  double speed_min = 1.0 / 3.0;
  double speed_max = 3.0;
  double noise_sigma = 0.05;
  double mixing_strength = 0.05;
  double appearance_amplitude = 0.7;

  void validate() const {
    if (n_processes < 1 || sequences_per_process < 1) throw ConfigError("dataset needs sequences");
    if (k_phases < 1 || d_latent < 1) throw ConfigError("k_phases and d_latent must be >= 1");
    if (observed_dim < d_latent) throw ConfigError("observed_dim must be >= d_latent");
    if (min_length < 1 || max_length < min_length) throw ConfigError("invalid length range");
    if (canonical_length < k_phases) throw ConfigError("canonical_length must be >= k_phases");
    if (warp_knots < 0) throw ConfigError("warp_knots must be >= 0");
    if (!(speed_min > 0.0) || !(speed_max >= speed_min)) throw ConfigError("invalid speed range");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
    if (!(mixing_strength >= 0.0)) throw ConfigError("mixing_strength must be >= 0");
    if (!(appearance_amplitude >= 0.0)) throw ConfigError("appearance_amplitude must be >= 0");
  }
};

struct SequenceRecord {
  std::string name;
  int process = 0;
  FeatureSequence observed;
  std::vector<double> canonical_time;
  std::vector<int> phases;
  WarpParams warp;
};

struct Dataset {
  DatasetConfig config;
  std::uint64_t seed = 0;
  std::vector<LatentProcess> processes;
  std::vector<SequenceRecord> sequences;

  /// Sequence indices grouped by process label.
  std::vector<std::vector<std::size_t>> groups() const {
    std::vector<std::vector<std::size_t>> g(processes.size());
    for (std::size_t i = 0; i < sequences.size(); ++i) g.at(sequences[i].process).push_back(i);
    return g;
  }
};

/// Independent generator stream for (seed, role, a, b).
inline Prng derived_stream(std::uint64_t seed, std::uint32_t role, std::uint32_t a,
                           std::uint32_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    role, a, b};
  return Prng(seq);
}

inline Dataset build_dataset(const DatasetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Dataset ds{cfg, seed, {}, {}};
  for (int p = 0; p < cfg.n_processes; ++p) {
    Prng rng = derived_stream(seed, 1, p);
    ds.processes.push_back(generate_process(cfg.k_phases, cfg.d_latent, cfg.canonical_length, rng));
  }
  for (int p = 0; p < cfg.n_processes; ++p) {
    for (int s = 0; s < cfg.sequences_per_process; ++s) {
      Prng rng = derived_stream(seed, 2, p, s);
      std::uniform_int_distribution<int> len(cfg.min_length, cfg.max_length);
      const int length = len(rng);
      WarpParams warp = random_warp(cfg.warp_knots, cfg.speed_min, cfg.speed_max, rng);
      NuisanceParams nuisance{random_mixing(cfg.observed_dim, cfg.mixing_strength, rng), {}};
      nuisance.appearance =
          random_appearance(cfg.observed_dim - cfg.d_latent, cfg.appearance_amplitude, rng);
      auto obs = warp_and_observe(ds.processes[p], warp, nuisance, cfg.noise_sigma, length, rng);
      char name[32];
      std::snprintf(name, sizeof name, "p%02d_s%02d", p, s);
      ds.sequences.push_back({name, p, std::move(obs.observed), std::move(obs.canonical_time),
                              std::move(obs.phases), std::move(warp)});
    }
  }
  return ds;
}

/// Noise-free, unmixed latent state at every frame of a sequence.
inline FeatureSequence latent_states(const Dataset& ds, const SequenceRecord& rec) {
  const auto& proc = ds.processes.at(rec.process);
  Matrix z(proc.latent_dim(), static_cast<Eigen::Index>(rec.canonical_time.size()));
  for (std::size_t i = 0; i < rec.canonical_time.size(); ++i) {
    z.col(static_cast<Eigen::Index>(i)) = proc.at(rec.canonical_time[i]);
  }
  return FeatureSequence(std::move(z));
}

}  // namespace smoothdtw
