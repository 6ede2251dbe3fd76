#pragma once

// Minimizes the combined alignment objective over random same-label pairs.
// Each step draws `batch_pairs` pairs, samples T sorted frames from each
// sequence, backpropagates the pair loss through the embedding model and
// applies one Adam update with the batch-averaged gradient.

#include <future>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "smoothdtw/adam.hpp"
#include "smoothdtw/gradients.hpp"
#include "smoothdtw/model.hpp"
#include "smoothdtw/synthetic.hpp"

namespace smoothdtw {

struct TrainingConfig {
  int frames_per_sequence = 20;
  int batch_pairs = 4;
  int steps = 2000;
  std::uint64_t seed = 0;
  AdamParams adam{};
  ModelConfig model{};
  int threads = 1;

  void validate() const {
    if (frames_per_sequence < 1) throw ConfigError("frames_per_sequence must be >= 1");
    if (batch_pairs < 1) throw ConfigError("batch_pairs must be >= 1");
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (!(adam.learning_rate > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
        !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.epsilon > 0.0)) {
      throw ConfigError("invalid optimizer parameters");
    }
    if (threads < 1) throw ConfigError("threads must be >= 1");
    model.validate();
  }
};

/// `t` distinct frame indices drawn uniformly without replacement, ascending.
inline std::vector<Eigen::Index> sample_frames(Eigen::Index length, int t, Prng& rng) {
  if (t < 0 || t > length) {
    throw InvalidArgument("cannot sample " + std::to_string(t) + " frames from " +
                          std::to_string(length));
  }
  // Selection sampling: one pass, keeps the indices in order.
  std::vector<Eigen::Index> out;
  out.reserve(static_cast<std::size_t>(t));
  Eigen::Index needed = t;
  for (Eigen::Index i = 0; i < length && needed > 0; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(0, length - i - 1);
    if (pick(rng) < needed) {
      out.push_back(i);
      --needed;
    }
  }
  return out;
}

/// Sequences sharing a latent process label.
using TrainingGroup = std::vector<FeatureSequence>;

struct PairSample {
  const FeatureSequence* x = nullptr;
  const FeatureSequence* y = nullptr;
  std::vector<Eigen::Index> x_frames;
  std::vector<Eigen::Index> y_frames;
};

struct PairResult {
  double loss = 0.0;
  ModelGradients grads;
};

/// Loss and parameter gradients for one sampled pair.
inline PairResult pair_gradients(const EmbeddingModel& model, const PairSample& pair,
                                 const LossConfig& loss) {
  EmbeddingModel::Trace tx, ty;
  const Matrix ex = model.forward(model.stack_context(pair.x->matrix(), pair.x_frames), &tx);
  const Matrix ey = model.forward(model.stack_context(pair.y->matrix(), pair.y_frames), &ty);
  const LossGradients g = loss_gradients(FeatureSequence(ex), FeatureSequence(ey), loss);
  PairResult out{g.loss_value, model.zero_gradients()};
  model.backward(tx, g.d_x, out.grads);
  model.backward(ty, g.d_y, out.grads);
  return out;
}

/// Everything needed to continue training bit-exactly.
struct TrainerState {
  EmbeddingModel model;
  Adam optimizer;
  Prng rng;
  std::uint64_t step = 0;
  std::vector<double> loss_trace;

  std::string rng_state() const {
    std::ostringstream os;
    os << rng;
    return os.str();
  }

  void set_rng_state(const std::string& s) {
    std::istringstream is(s);
    is >> rng;
    if (!is) throw InvalidArgument("malformed generator state");
  }
};

inline void validate_groups(const std::vector<TrainingGroup>& groups, const TrainingConfig& cfg) {
  if (groups.empty()) throw ConfigError("training needs at least one group");
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].size() < 2) {
      throw ConfigError("group " + std::to_string(g) + " has fewer than 2 sequences");
    }
    for (const auto& s : groups[g]) {
      if (s.dim() != cfg.model.input_dim) {
        throw ConfigError("sequence dim " + std::to_string(s.dim()) + " != model input_dim " +
                          std::to_string(cfg.model.input_dim));
      }
      if (s.length() < cfg.frames_per_sequence) {
        throw ConfigError("a sequence in group " + std::to_string(g) + " is shorter than " +
                          "frames_per_sequence");
      }
    }
  }
}

/// Fresh model and optimizer. The model is initialized from its own stream so
/// that the pair-sampling stream does not depend on the model size.
inline TrainerState initial_state(const TrainingConfig& cfg) {
  cfg.validate();
  Prng init_rng = derived_stream(cfg.seed, 10, 0);
  TrainerState st;
  st.model = EmbeddingModel::initialize(cfg.model, init_rng);
  st.optimizer = Adam(cfg.adam, st.model.parameter_count());
  st.rng = derived_stream(cfg.seed, 11, 0);
  return st;
}

/// Draws the pairs and frames of one step; consumes the state's generator.
inline std::vector<PairSample> sample_batch(const std::vector<TrainingGroup>& groups,
                                            const TrainingConfig& cfg, Prng& rng) {
  std::vector<PairSample> batch;
  std::uniform_int_distribution<std::size_t> pick_group(0, groups.size() - 1);
  for (int b = 0; b < cfg.batch_pairs; ++b) {
    const auto& group = groups[pick_group(rng)];
    std::uniform_int_distribution<std::size_t> first(0, group.size() - 1);
    std::uniform_int_distribution<std::size_t> second(0, group.size() - 2);
    const std::size_t i = first(rng);
    std::size_t j = second(rng);
    if (j >= i) ++j;
    PairSample p{&group[i], &group[j], {}, {}};
    p.x_frames = sample_frames(p.x->length(), cfg.frames_per_sequence, rng);
    p.y_frames = sample_frames(p.y->length(), cfg.frames_per_sequence, rng);
    batch.push_back(std::move(p));
  }
  return batch;
}

/// Per-pair results of one batch; pairs may be evaluated on several threads but
/// the returned order is the batch order.
inline std::vector<PairResult> evaluate_batch(const EmbeddingModel& model,
                                              const std::vector<PairSample>& batch,
                                              const LossConfig& loss, int threads) {
  std::vector<PairResult> results(batch.size());
  if (threads <= 1 || batch.size() <= 1) {
    for (std::size_t b = 0; b < batch.size(); ++b) results[b] = pair_gradients(model, batch[b], loss);
    return results;
  }
  std::vector<std::future<void>> jobs;
  const std::size_t workers = std::min<std::size_t>(threads, batch.size());
  for (std::size_t w = 0; w < workers; ++w) {
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t b = w; b < batch.size(); b += workers) {
        results[b] = pair_gradients(model, batch[b], loss);
      }
    }));
  }
  for (auto& j : jobs) j.get();
  return results;
}

/// Advances training until `cfg.steps` total steps have been taken.
inline void train_until_done(TrainerState& st, const std::vector<TrainingGroup>& groups,
                             const LossConfig& loss, const TrainingConfig& cfg) {
  cfg.validate();
  loss.validate();
  if (loss.gamma == 0.0) throw ConfigError("training needs gamma > 0");
  validate_groups(groups, cfg);
  std::vector<double> params = st.model.flatten();
  while (st.step < static_cast<std::uint64_t>(cfg.steps)) {
    const auto batch = sample_batch(groups, cfg, st.rng);
    const auto results = evaluate_batch(st.model, batch, loss, cfg.threads);
    ModelGradients total = st.model.zero_gradients();
    double loss_sum = 0.0;
    for (const auto& r : results) {
      total += r.grads;
      loss_sum += r.loss;
    }
    std::vector<double> grad = flatten(total);
    const double scale = 1.0 / static_cast<double>(results.size());
    for (auto& g : grad) g *= scale;
    st.optimizer.step(params, grad);
    st.model.assign(params);
    st.loss_trace.push_back(loss_sum * scale);
    ++st.step;
  }
}

struct TrainResult {
  EmbeddingModel model;
  std::vector<double> loss_trace;
};

inline TrainResult train(const std::vector<TrainingGroup>& groups, const LossConfig& loss,
                         const TrainingConfig& cfg) {
  validate_groups(groups, cfg);
  TrainerState st = initial_state(cfg);
  train_until_done(st, groups, loss, cfg);
  return {std::move(st.model), std::move(st.loss_trace)};
}

}  // namespace smoothdtw
