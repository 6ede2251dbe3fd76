#pragma once

// Framewise embedding network: each timestep (optionally stacked with its
// neighbours) goes through tanh hidden layers and a linear projection; the
// output is L2-normalized per column.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "smoothdtw/core_ops.hpp"

namespace smoothdtw {

struct ModelConfig {
  int input_dim = 16;
  int hidden_width = 64;
  int hidden_layers = 2;
  int embed_dim = 32;
  int context_radius = 1;

  int stacked_dim() const { return input_dim * (2 * context_radius + 1); }

  void validate() const {
    if (input_dim < 1 || hidden_width < 1 || hidden_layers < 0 || embed_dim < 1 ||
        context_radius < 0) {
      throw ConfigError("invalid model dimensions");
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// Per-layer parameter gradients, same shapes as the model's layers.
struct ModelGradients {
  std::vector<DenseLayer> layers;

  ModelGradients& operator+=(const ModelGradients& other) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weight += other.layers[l].weight;
      layers[l].bias += other.layers[l].bias;
    }
    return *this;
  }
};

class EmbeddingModel {
 public:
  EmbeddingModel() = default;

  EmbeddingModel(ModelConfig cfg, std::vector<DenseLayer> layers)
      : cfg_(cfg), layers_(std::move(layers)) {
    cfg_.validate();
    Eigen::Index in = cfg_.stacked_dim();
    if (layers_.size() != static_cast<std::size_t>(cfg_.hidden_layers + 1)) {
      throw InvalidArgument("layer count does not match the model config");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Eigen::Index out = l + 1 == layers_.size() ? cfg_.embed_dim : cfg_.hidden_width;
      if (layers_[l].weight.rows() != out || layers_[l].weight.cols() != in ||
          layers_[l].bias.size() != out) {
        throw InvalidArgument("layer " + std::to_string(l) + " has the wrong shape");
      }
      in = out;
    }
  }

  /// Weights uniform in +-sqrt(3 / fan_in) (unit-variance preserving), zero biases.
  static EmbeddingModel initialize(const ModelConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    std::vector<DenseLayer> layers;
    Eigen::Index in = cfg.stacked_dim();
    for (int l = 0; l <= cfg.hidden_layers; ++l) {
      const Eigen::Index out = l == cfg.hidden_layers ? cfg.embed_dim : cfg.hidden_width;
      const double bound = std::sqrt(3.0 / static_cast<double>(in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      DenseLayer layer{Matrix(out, in), Vector::Zero(out)};
      for (Eigen::Index r = 0; r < out; ++r)
        for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = dist(rng);
      layers.push_back(std::move(layer));
      in = out;
    }
    return EmbeddingModel(cfg, std::move(layers));
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  ModelGradients zero_gradients() const {
    ModelGradients g;
    for (const auto& l : layers_) {
      g.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
    }
    return g;
  }

  /// Columns [frame - r, frame + r] of the observations stacked into one input;
  /// indices are clamped at the sequence ends.
  Matrix stack_context(const Matrix& observed, std::span<const Eigen::Index> frames) const {
    if (observed.rows() != cfg_.input_dim) {
      throw InvalidArgument("observation dim " + std::to_string(observed.rows()) +
                            " does not match model input " + std::to_string(cfg_.input_dim));
    }
    const int r = cfg_.context_radius;
    Matrix out(cfg_.stacked_dim(), static_cast<Eigen::Index>(frames.size()));
    for (std::size_t f = 0; f < frames.size(); ++f) {
      if (frames[f] < 0 || frames[f] >= observed.cols()) throw InvalidArgument("frame out of range");
      for (int o = -r; o <= r; ++o) {
        const Eigen::Index src = std::clamp<Eigen::Index>(frames[f] + o, 0, observed.cols() - 1);
        out.block((o + r) * cfg_.input_dim, static_cast<Eigen::Index>(f), cfg_.input_dim, 1) =
            observed.col(src);
      }
    }
    return out;
  }

  /// Activations of every layer, kept for the backward pass.
  struct Trace {
    std::vector<Matrix> activations;  // activations[0] is the input
  };

  /// Raw (pre-normalization) embeddings of stacked inputs.
  Matrix forward(const Matrix& input, Trace* trace = nullptr) const {
    Matrix h = input;
    if (trace) trace->activations.assign(1, h);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = (layers_[l].weight * h).colwise() + layers_[l].bias;
      if (l + 1 < layers_.size()) z = z.array().tanh();
      h = std::move(z);
      if (trace) trace->activations.push_back(h);
    }
    return h;
  }

  /// Accumulates parameter gradients given dL/d(raw output).
  void backward(const Trace& trace, const Matrix& grad_out, ModelGradients& grads) const {
    Matrix g = grad_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Matrix& in = trace.activations[l];
      grads.layers[l].weight += g * in.transpose();
      grads.layers[l].bias += g.rowwise().sum();
      if (l == 0) break;
      g = layers_[l].weight.transpose() * g;
      // tanh'(z) = 1 - tanh(z)^2, and activations[l] holds tanh(z).
      g.array() *= 1.0 - in.array().square();
    }
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& l : layers_) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) out.push_back(l.weight(r, c));
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) out.push_back(l.bias(r));
    }
    return out;
  }

  void assign(std::span<const double> params) {
    if (params.size() != parameter_count()) throw InvalidArgument("parameter count mismatch");
    std::size_t k = 0;
    for (auto& l : layers_) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = params[k++];
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = params[k++];
    }
  }

  friend bool operator==(const EmbeddingModel& a, const EmbeddingModel& b) {
    return a.cfg_ == b.cfg_ && a.flatten() == b.flatten();
  }

 private:
  ModelConfig cfg_;
  std::vector<DenseLayer> layers_;
};

/// Same row-major layout as EmbeddingModel::flatten.
inline std::vector<double> flatten(const ModelGradients& g) {
  std::vector<double> out;
  for (const auto& l : g.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) out.push_back(l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) out.push_back(l.bias(r));
  }
  return out;
}

/// Raw model output for every frame of a sequence.
inline Matrix embed_raw(const EmbeddingModel& model, const FeatureSequence& observed) {
  std::vector<Eigen::Index> frames(static_cast<std::size_t>(observed.length()));
  std::iota(frames.begin(), frames.end(), Eigen::Index{0});
  return model.forward(model.stack_context(observed.matrix(), frames));
}

/// L2-normalized embeddings of every frame.
inline FeatureSequence embed(const EmbeddingModel& model, const FeatureSequence& observed) {
  return l2_normalize(FeatureSequence(embed_raw(model, observed)));
}

}  // namespace smoothdtw
