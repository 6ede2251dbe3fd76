#pragma once

// Alignment-quality metrics on held-out pairs.

#include <functional>
#include <string>
#include <vector>

#include "smoothdtw/dtw.hpp"
#include "smoothdtw/synthetic.hpp"

namespace smoothdtw {

namespace detail {

/// For each column of u, the index of the most cosine-similar column of v
/// (lowest index on ties).
inline std::vector<Eigen::Index> nearest_neighbours(const Matrix& u_unit, const Matrix& v_unit) {
  const Matrix sim = u_unit.transpose() * v_unit;
  std::vector<Eigen::Index> nn(static_cast<std::size_t>(sim.rows()));
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < sim.cols(); ++j) {
      if (sim(i, j) > sim(i, best)) best = j;
    }
    nn[static_cast<std::size_t>(i)] = best;
  }
  return nn;
}

inline Matrix unit_columns(const FeatureSequence& s) { return l2_normalize(s).matrix(); }

}  // namespace detail

/// Rank agreement between frame order in u and the order of each frame's
/// nearest neighbour in v. Pairs whose neighbours coincide count as neither
/// concordant nor discordant.
inline double kendalls_tau(const FeatureSequence& u, const FeatureSequence& v) {
  if (u.length() < 2 || v.length() < 2) throw InvalidArgument("kendalls_tau needs length >= 2");
  detail::check_same_dim(u, v);
  const auto nn = detail::nearest_neighbours(detail::unit_columns(u), detail::unit_columns(v));
  long long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < nn.size(); ++i) {
    for (std::size_t j = i + 1; j < nn.size(); ++j) {
      if (nn[j] > nn[i]) ++concordant;
      else if (nn[j] < nn[i]) ++discordant;
    }
  }
  const double m = static_cast<double>(nn.size());
  return static_cast<double>(concordant - discordant) / (m * (m - 1.0) / 2.0);
}

/// Mean |t_v(match(i)) - t_u(i)| over frames of u, in canonical-time units.
/// Matches come from the hard synchronization path; a frame matched to several
/// frames of v uses the mean of their canonical times.
inline double alignment_error(const FeatureSequence& u, const FeatureSequence& v,
                              const std::vector<double>& u_time, const std::vector<double>& v_time,
                              double beta) {
  if (static_cast<Eigen::Index>(u_time.size()) != u.length() ||
      static_cast<Eigen::Index>(v_time.size()) != v.length()) {
    throw InvalidArgument("ground truth does not cover both sequences");
  }
  const auto path = synchronize(l2_normalize(u), l2_normalize(v), beta);
  std::vector<double> sum(u_time.size(), 0.0);
  std::vector<int> count(u_time.size(), 0);
  for (const auto& c : path.steps) {
    sum[c.i] += v_time[c.j];
    ++count[c.i];
  }
  double total = 0.0;
  for (std::size_t i = 0; i < u_time.size(); ++i) total += std::abs(sum[i] / count[i] - u_time[i]);
  return total / static_cast<double>(u_time.size());
}

/// Fraction of test frames whose cosine 1-nearest training frame carries the
/// same phase label.
inline double phase_accuracy(const FeatureSequence& train, const std::vector<int>& train_labels,
                             const FeatureSequence& test, const std::vector<int>& test_labels) {
  if (train.length() == 0 || test.length() == 0) throw InvalidArgument("phase_accuracy needs non-empty sets");
  if (static_cast<Eigen::Index>(train_labels.size()) != train.length() ||
      static_cast<Eigen::Index>(test_labels.size()) != test.length()) {
    throw InvalidArgument("labels do not cover the embeddings");
  }
  detail::check_same_dim(train, test);
  const auto nn = detail::nearest_neighbours(detail::unit_columns(test), detail::unit_columns(train));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < nn.size(); ++i) {
    if (train_labels[static_cast<std::size_t>(nn[i])] == test_labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(nn.size());
}

/// Held-out sequences: the last `holdout_per_process` of every process group.
struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline DatasetSplit split_dataset(const Dataset& ds, int holdout_per_process) {
  if (holdout_per_process < 2) throw ConfigError("holdout_per_process must be >= 2 to form pairs");
  DatasetSplit split;
  for (const auto& group : ds.groups()) {
    if (static_cast<int>(group.size()) < holdout_per_process + 2) {
      throw ConfigError("each process needs at least holdout_per_process + 2 sequences");
    }
    const std::size_t cut = group.size() - static_cast<std::size_t>(holdout_per_process);
    split.train.insert(split.train.end(), group.begin(), group.begin() + cut);
    split.test.insert(split.test.end(), group.begin() + cut, group.end());
  }
  return split;
}

struct PairReport {
  std::string a;
  std::string b;
  double kendalls_tau = 0.0;
  double alignment_error = 0.0;
};

struct SequenceReport {
  std::string name;
  double phase_accuracy = 0.0;
};

struct EvalReport {
  double kendalls_tau = 0.0;
  double mean_alignment_error = 0.0;
  double phase_accuracy = 0.0;
  std::vector<PairReport> pairs;
  std::vector<SequenceReport> sequences;
};

/// Maps an observed sequence to its embedding.
using Embedder = std::function<FeatureSequence(const SequenceRecord&)>;

/// Pairs are all unordered same-process pairs of held-out sequences. Phase
/// accuracy classifies each held-out sequence against the training sequences
/// of its own process.
inline EvalReport evaluate(const Dataset& ds, const DatasetSplit& split, const Embedder& embedder,
                           double beta) {
  if (split.test.empty() || split.train.empty()) throw ConfigError("empty evaluation split");
  std::vector<FeatureSequence> emb(ds.sequences.size());
  auto get = [&](std::size_t i) -> const FeatureSequence& {
    if (emb[i].length() == 0) emb[i] = l2_normalize(embedder(ds.sequences[i]));
    return emb[i];
  };

  EvalReport report;
  for (std::size_t a = 0; a < split.test.size(); ++a) {
    for (std::size_t b = a + 1; b < split.test.size(); ++b) {
      const auto& ra = ds.sequences[split.test[a]];
      const auto& rb = ds.sequences[split.test[b]];
      if (ra.process != rb.process) continue;
      const auto& ea = get(split.test[a]);
      const auto& eb = get(split.test[b]);
      report.pairs.push_back({ra.name, rb.name, kendalls_tau(ea, eb),
                              alignment_error(ea, eb, ra.canonical_time, rb.canonical_time, beta)});
    }
  }
  if (report.pairs.empty()) throw ConfigError("evaluation split has no same-process pairs");

  for (std::size_t t : split.test) {
    const auto& rec = ds.sequences[t];
    Matrix pool;
    std::vector<int> labels;
    for (std::size_t r : split.train) {
      if (ds.sequences[r].process != rec.process) continue;
      const auto& e = get(r);
      pool.conservativeResize(e.dim(), pool.cols() + e.length());
      pool.rightCols(e.length()) = e.matrix();
      labels.insert(labels.end(), ds.sequences[r].phases.begin(), ds.sequences[r].phases.end());
    }
    if (labels.empty()) throw ConfigError("no training frames for process " + std::to_string(rec.process));
    report.sequences.push_back(
        {rec.name, phase_accuracy(FeatureSequence(std::move(pool)), labels, get(t), rec.phases)});
  }

  for (const auto& p : report.pairs) {
    report.kendalls_tau += p.kendalls_tau;
    report.mean_alignment_error += p.alignment_error;
  }
  report.kendalls_tau /= static_cast<double>(report.pairs.size());
  report.mean_alignment_error /= static_cast<double>(report.pairs.size());
  for (const auto& s : report.sequences) report.phase_accuracy += s.phase_accuracy;
  report.phase_accuracy /= static_cast<double>(report.sequences.size());
  return report;
}

}  // namespace smoothdtw
