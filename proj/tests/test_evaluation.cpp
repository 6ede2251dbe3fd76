#include <gtest/gtest.h>

#include "smoothdtw/evaluation.hpp"
#include "test_support.hpp"

using namespace smoothdtw;

namespace {

FeatureSequence reversed(const FeatureSequence& s) { return FeatureSequence(s.matrix().rowwise().reverse()); }

Dataset clean_dataset() {
  DatasetConfig cfg;
  cfg.n_processes = 3;
  cfg.sequences_per_process = 8;
  cfg.noise_sigma = 0.0;
  cfg.appearance_amplitude = 0.0;
  return build_dataset(cfg, 5);
}

}  // namespace

TEST(KendallsTau, IdenticalIsOne) {
  testing_support::Prng rng(1);
  const auto u = testing_support::random_unit_sequence(rng, 8, 30);
  EXPECT_EQ(kendalls_tau(u, u), 1.0);
}

TEST(KendallsTau, ReversedIsMinusOne) {
  testing_support::Prng rng(2);
  const auto u = testing_support::random_unit_sequence(rng, 8, 30);
  EXPECT_EQ(kendalls_tau(u, reversed(u)), -1.0);
}

TEST(KendallsTau, InvariantToIncreasingRemapOfV) {
  testing_support::Prng rng(3);
  const auto u = testing_support::random_unit_sequence(rng, 8, 20);
  Matrix v(8, 30);
  for (int j = 0; j < 30; ++j) v.col(j) = testing_support::random_matrix(rng, 8, 1, -1, 1).normalized();
  const std::vector<int> keep{0, 3, 4, 9, 12, 13, 20, 21, 27, 29};
  Matrix vsub(8, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) vsub.col(k) = v.col(keep[k]);
  Matrix vspread = Matrix::Zero(8, 60);
  for (int j = 0; j < 60; ++j) vspread.col(j) = testing_support::random_matrix(rng, 8, 1, -1, 1).normalized();
  // Place the same columns at other strictly increasing positions among decoys
  // that can never be nearest neighbours.
  const Matrix decoys = -u.matrix().rowwise().sum().normalized().replicate(1, 60);
  vspread = decoys;
  for (std::size_t k = 0; k < keep.size(); ++k) vspread.col(5 * k + 2) = vsub.col(k);
  EXPECT_DOUBLE_EQ(kendalls_tau(u, FeatureSequence(vsub)), kendalls_tau(u, FeatureSequence(vspread)));
}

TEST(KendallsTau, RandomEmbeddingsAreNearZero) {
  int small = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    testing_support::Prng rng(seed);
    const auto u = testing_support::random_unit_sequence(rng, 16, 50);
    const auto v = testing_support::random_unit_sequence(rng, 16, 50);
    if (std::abs(kendalls_tau(u, v)) < 0.3) ++small;
  }
  EXPECT_GT(small, 190);
}

TEST(KendallsTau, RejectsShortSequences) {
  testing_support::Prng rng(4);
  const auto u = testing_support::random_unit_sequence(rng, 4, 1);
  const auto v = testing_support::random_unit_sequence(rng, 4, 5);
  EXPECT_THROW(kendalls_tau(u, v), InvalidArgument);
  EXPECT_THROW(kendalls_tau(v, u), InvalidArgument);
}

TEST(AlignmentError, ConstantEmbeddingsFollowDefaultPath) {
  const auto ds = clean_dataset();
  const auto& a = ds.sequences[0];
  const auto& b = ds.sequences[1];
  const FeatureSequence ca(Matrix::Ones(3, a.observed.length()));
  const FeatureSequence cb(Matrix::Ones(3, b.observed.length()));
  const auto path = hard_path(Matrix::Constant(a.observed.length(), b.observed.length(), 1.0));
  std::vector<double> sum(a.canonical_time.size(), 0.0), count(a.canonical_time.size(), 0.0);
  for (const auto& c : path.steps) {
    sum[c.i] += b.canonical_time[c.j];
    count[c.i] += 1.0;
  }
  double expected = 0.0;
  for (std::size_t i = 0; i < sum.size(); ++i) expected += std::abs(sum[i] / count[i] - a.canonical_time[i]);
  expected /= static_cast<double>(sum.size());
  const double constant = alignment_error(ca, cb, a.canonical_time, b.canonical_time, 0.1);
  EXPECT_NEAR(constant, expected, 1e-15);
  const double oracle = alignment_error(latent_states(ds, a), latent_states(ds, b), a.canonical_time,
                                        b.canonical_time, 0.1);
  EXPECT_GT(constant, oracle);
  EXPECT_GE(oracle, 0.0);
}

TEST(AlignmentError, OracleIsWithinAFewFrames) {
  const auto ds = clean_dataset();
  double err = 0.0, step = 0.0;
  int pairs = 0;
  for (std::size_t k = 0; k + 1 < ds.sequences.size(); ++k) {
    const auto& a = ds.sequences[k];
    const auto& b = ds.sequences[k + 1];
    if (a.process != b.process) continue;
    err += alignment_error(latent_states(ds, a), latent_states(ds, b), a.canonical_time,
                           b.canonical_time, 0.1);
    step += 1.0 / static_cast<double>(a.canonical_time.size() - 1);
    ++pairs;
  }
  EXPECT_LT(err / pairs, 3.0 * step / pairs);
}

TEST(AlignmentError, RejectsMismatchedTruth) {
  testing_support::Prng rng(5);
  const auto u = testing_support::random_unit_sequence(rng, 4, 5);
  EXPECT_THROW(alignment_error(u, u, {0, 1}, {0, 0.25, 0.5, 0.75, 1}, 0.1), InvalidArgument);
}

TEST(PhaseAccuracy, SelfMatchIsPerfect) {
  testing_support::Prng rng(6);
  const auto u = testing_support::random_unit_sequence(rng, 8, 40);
  std::vector<int> labels(40);
  for (int i = 0; i < 40; ++i) labels[i] = i / 10;
  EXPECT_EQ(phase_accuracy(u, labels, u, labels), 1.0);
}

TEST(PhaseAccuracy, RandomEmbeddingsAreAtChance) {
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    testing_support::Prng rng(seed);
    const auto train = testing_support::random_unit_sequence(rng, 16, 400);
    const auto test = testing_support::random_unit_sequence(rng, 16, 400);
    std::vector<int> labels(400);
    for (int i = 0; i < 400; ++i) labels[i] = i % 4;
    total += phase_accuracy(train, labels, test, labels);
  }
  EXPECT_NEAR(total / 20.0, 0.25, 0.05);
}

TEST(PhaseAccuracy, InvariantUnderGlobalRotation) {
  testing_support::Prng rng(7);
  const auto train = testing_support::random_unit_sequence(rng, 6, 50);
  const auto test = testing_support::random_unit_sequence(rng, 6, 30);
  std::vector<int> tl(50), sl(30);
  for (int i = 0; i < 50; ++i) tl[i] = i % 3;
  for (int i = 0; i < 30; ++i) sl[i] = i % 3;
  const Matrix q = random_mixing(6, 3.0, rng);
  EXPECT_EQ(phase_accuracy(train, tl, test, sl),
            phase_accuracy(FeatureSequence(q * train.matrix()), tl, FeatureSequence(q * test.matrix()), sl));
}

TEST(PhaseAccuracy, EmptyAndMismatchedInputs) {
  testing_support::Prng rng(8);
  const auto u = testing_support::random_unit_sequence(rng, 4, 3);
  EXPECT_THROW(phase_accuracy(FeatureSequence(), {}, u, {0, 0, 0}), InvalidArgument);
  EXPECT_THROW(phase_accuracy(u, {0, 0, 0}, FeatureSequence(), {}), InvalidArgument);
  EXPECT_THROW(phase_accuracy(u, {0, 0}, u, {0, 0, 0}), InvalidArgument);
}

TEST(Evaluate, OracleOnCleanDataIsNearPerfect) {
  const auto ds = clean_dataset();
  const auto split = split_dataset(ds, 3);
  const auto report = evaluate(ds, split, [&](const SequenceRecord& r) { return latent_states(ds, r); }, 0.1);
  EXPECT_GT(report.phase_accuracy, 0.95);
  EXPECT_GT(report.kendalls_tau, 0.9);
}

TEST(Evaluate, AggregatesAreMeansOfBreakdowns) {
  const auto ds = clean_dataset();
  const auto split = split_dataset(ds, 3);
  const auto report = evaluate(ds, split, [](const SequenceRecord& r) { return r.observed; }, 0.1);
  ASSERT_EQ(report.pairs.size(), 3u * 3u);
  ASSERT_EQ(report.sequences.size(), 9u);
  double tau = 0.0, err = 0.0, acc = 0.0;
  for (const auto& p : report.pairs) {
    tau += p.kendalls_tau;
    err += p.alignment_error;
  }
  for (const auto& s : report.sequences) acc += s.phase_accuracy;
  EXPECT_NEAR(report.kendalls_tau, tau / 9.0, 1e-12);
  EXPECT_NEAR(report.mean_alignment_error, err / 9.0, 1e-12);
  EXPECT_NEAR(report.phase_accuracy, acc / 9.0, 1e-12);
}

TEST(Evaluate, SplitHoldsOutTail) {
  const auto ds = clean_dataset();
  const auto split = split_dataset(ds, 3);
  EXPECT_EQ(split.train.size(), 15u);
  EXPECT_EQ(split.test.size(), 9u);
  EXPECT_EQ(split.test.front(), 5u);
  EXPECT_THROW(split_dataset(ds, 1), ConfigError);
  EXPECT_THROW(split_dataset(ds, 7), ConfigError);
}
