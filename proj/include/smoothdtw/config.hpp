#pragma once

// Run configuration: flat `key = value` lines, `#` starts a comment.
// Unknown keys, duplicates and malformed values are errors that name the
// file, line and key.

#include <charconv>
#include <functional>
#include <map>
#include <string>

#include "smoothdtw/io.hpp"

namespace smoothdtw {

struct GradCheckConfig {
  int cases = 20;
  int max_length = 8;
  int dim = 4;
  double step = 1e-5;
  double tolerance = 1e-4;
};

struct RunConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset{};
  LossConfig loss{};
  TrainingConfig training{};
  GradCheckConfig check_grad{};
  int holdout_per_process = 5;
  std::string dataset_dir;
  std::string checkpoint;

  /// Values derived from other sections.
  void finalize() {
    training.seed = seed;
    training.model.input_dim = dataset.observed_dim;
  }

  void validate() const {
    dataset.validate();
    loss.validate();
    training.validate();
    if (holdout_per_process < 2) throw ConfigError("holdout_per_process must be >= 2");
    if (check_grad.cases < 1 || check_grad.max_length < 1 || check_grad.dim < 1) {
      throw ConfigError("check_grad sizes must be positive");
    }
    if (!(check_grad.step > 0.0) || !(check_grad.tolerance > 0.0)) {
      throw ConfigError("check_grad step and tolerance must be positive");
    }
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& text) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw ConfigError("not a valid number");
  return v;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

template <typename T>
Setter set(T RunConfig::*section, auto field) {
  return [section, field](RunConfig& c, const std::string& v) {
    auto& target = (c.*section).*field;
    target = parse_number<std::remove_reference_t<decltype(target)>>(v);
  };
}

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["seed"] = [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>(v); };
    t["holdout_per_process"] = [](RunConfig& c, const std::string& v) {
      c.holdout_per_process = parse_number<int>(v);
    };
    t["dataset_dir"] = [](RunConfig& c, const std::string& v) { c.dataset_dir = v; };
    t["checkpoint"] = [](RunConfig& c, const std::string& v) { c.checkpoint = v; };

    t["dataset.n_processes"] = set(&RunConfig::dataset, &DatasetConfig::n_processes);
    t["dataset.sequences_per_process"] = set(&RunConfig::dataset, &DatasetConfig::sequences_per_process);
    t["dataset.k_phases"] = set(&RunConfig::dataset, &DatasetConfig::k_phases);
    t["dataset.d_latent"] = set(&RunConfig::dataset, &DatasetConfig::d_latent);
    t["dataset.observed_dim"] = set(&RunConfig::dataset, &DatasetConfig::observed_dim);
    t["dataset.min_length"] = set(&RunConfig::dataset, &DatasetConfig::min_length);
    t["dataset.max_length"] = set(&RunConfig::dataset, &DatasetConfig::max_length);
    t["dataset.canonical_length"] = set(&RunConfig::dataset, &DatasetConfig::canonical_length);
    t["dataset.warp_knots"] = set(&RunConfig::dataset, &DatasetConfig::warp_knots);
    t["dataset.speed_min"] = set(&RunConfig::dataset, &DatasetConfig::speed_min);
    t["dataset.speed_max"] = set(&RunConfig::dataset, &DatasetConfig::speed_max);
    t["dataset.noise_sigma"] = set(&RunConfig::dataset, &DatasetConfig::noise_sigma);
    t["dataset.mixing_strength"] = set(&RunConfig::dataset, &DatasetConfig::mixing_strength);
    t["dataset.appearance_amplitude"] = set(&RunConfig::dataset, &DatasetConfig::appearance_amplitude);

    t["loss.lambda_g"] = set(&RunConfig::loss, &LossConfig::lambda_g);
    t["loss.lambda_s"] = set(&RunConfig::loss, &LossConfig::lambda_s);
    t["loss.gamma"] = set(&RunConfig::loss, &LossConfig::gamma);
    t["loss.beta"] = set(&RunConfig::loss, &LossConfig::beta);
    t["loss.alpha"] = set(&RunConfig::loss, &LossConfig::alpha);
    t["loss.operator"] = [](RunConfig& c, const std::string& v) { c.loss.kind = operator_kind_from_string(v); };
    t["loss.cost"] = [](RunConfig& c, const std::string& v) { c.loss.cost = cost_kind_from_string(v); };

    t["train.frames_per_sequence"] = set(&RunConfig::training, &TrainingConfig::frames_per_sequence);
    t["train.batch_pairs"] = set(&RunConfig::training, &TrainingConfig::batch_pairs);
    t["train.steps"] = set(&RunConfig::training, &TrainingConfig::steps);
    t["train.threads"] = set(&RunConfig::training, &TrainingConfig::threads);
    t["train.learning_rate"] = [](RunConfig& c, const std::string& v) {
      c.training.adam.learning_rate = parse_number<double>(v);
    };
    t["train.adam_beta1"] = [](RunConfig& c, const std::string& v) { c.training.adam.beta1 = parse_number<double>(v); };
    t["train.adam_beta2"] = [](RunConfig& c, const std::string& v) { c.training.adam.beta2 = parse_number<double>(v); };
    t["train.adam_epsilon"] = [](RunConfig& c, const std::string& v) {
      c.training.adam.epsilon = parse_number<double>(v);
    };
    t["model.hidden_width"] = [](RunConfig& c, const std::string& v) {
      c.training.model.hidden_width = parse_number<int>(v);
    };
    t["model.hidden_layers"] = [](RunConfig& c, const std::string& v) {
      c.training.model.hidden_layers = parse_number<int>(v);
    };
    t["model.embed_dim"] = [](RunConfig& c, const std::string& v) { c.training.model.embed_dim = parse_number<int>(v); };
    t["model.context_radius"] = [](RunConfig& c, const std::string& v) {
      c.training.model.context_radius = parse_number<int>(v);
    };

    t["check_grad.cases"] = set(&RunConfig::check_grad, &GradCheckConfig::cases);
    t["check_grad.max_length"] = set(&RunConfig::check_grad, &GradCheckConfig::max_length);
    t["check_grad.dim"] = set(&RunConfig::check_grad, &GradCheckConfig::dim);
    t["check_grad.step"] = set(&RunConfig::check_grad, &GradCheckConfig::step);
    t["check_grad.tolerance"] = set(&RunConfig::check_grad, &GradCheckConfig::tolerance);
    return t;
  }();
  return table;
}

}  // namespace detail

/// Parses config text on top of the defaults. `origin` labels error messages.
inline RunConfig parse_config(const std::string& text, const std::string& origin = "<config>") {
  RunConfig cfg;
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto it = detail::setters().find(key);
    if (it == detail::setters().end()) throw ConfigError(where + ": unknown key '" + key + "'");
    if (auto [prev, fresh] = seen.emplace(key, lineno); !fresh) {
      throw ConfigError(where + ": duplicate key '" + key + "' (first set on line " +
                        std::to_string(prev->second) + ")");
    }
    if (value.empty()) throw ConfigError(where + ": key '" + key + "' has no value");
    try {
      it->second(cfg, value);
    } catch (const std::exception& e) {
      throw ConfigError(where + ": key '" + key + "': " + e.what() + " ('" + value + "')");
    }
  }
  cfg.finalize();
  return cfg;
}

inline RunConfig load_config(const fs::path& path) { return parse_config(read_file(path), path.string()); }

}  // namespace smoothdtw
