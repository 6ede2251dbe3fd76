#pragma once

// File formats: sequence CSV, dataset directory + manifest, evaluation report,
// training checkpoint. Every float is written with enough digits to round-trip.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "smoothdtw/evaluation.hpp"
#include "smoothdtw/training.hpp"

namespace smoothdtw {

namespace fs = std::filesystem;
using Json = nlohmann::json;

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes through a temporary sibling and renames it into place so readers
/// never observe a partial file.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " into place");
  }
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Json parse_json(const fs::path& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Sequence CSV: one row per timestep, one column per feature, no header.

inline std::string sequence_to_csv(const FeatureSequence& s) {
  std::string out;
  for (Eigen::Index t = 0; t < s.length(); ++t) {
    for (Eigen::Index d = 0; d < s.dim(); ++d) {
      if (d) out += ',';
      out += format_double(s.matrix()(d, t));
    }
    out += '\n';
  }
  return out;
}

inline FeatureSequence sequence_from_csv(const std::string& text, const std::string& origin) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      const std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size()) {
        throw InvalidArgument(origin + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
      row.push_back(v);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw InvalidArgument(origin + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(rows.front().size()) + " columns, got " +
                            std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidArgument(origin + ": no rows");
  Matrix m(static_cast<Eigen::Index>(rows.front().size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t d = 0; d < rows[t].size(); ++d) m(d, t) = rows[t][d];
  try {
    return FeatureSequence(std::move(m));
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(origin + ": " + e.what());
  }
}

inline void write_sequence(const fs::path& path, const FeatureSequence& s) {
  write_file_atomic(path, sequence_to_csv(s));
}

inline FeatureSequence read_sequence(const fs::path& path) {
  return sequence_from_csv(read_file(path), path.string());
}

inline std::string matrix_to_csv(const Matrix& m) {
  std::string out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON helpers for Eigen types. Matrices are stored row-major as flat arrays.

inline Json matrix_to_json(const Matrix& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

inline Matrix matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(flat.size()) != rows * cols) {
    throw InvalidArgument("matrix size does not match its data");
  }
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[k++];
  return m;
}

inline Json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vector_from_json(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// ---------------------------------------------------------------------------
// Configs.

inline Json to_json(const DatasetConfig& c) {
  return {{"n_processes", c.n_processes},       {"sequences_per_process", c.sequences_per_process},
          {"k_phases", c.k_phases},             {"d_latent", c.d_latent},
          {"observed_dim", c.observed_dim},     {"min_length", c.min_length},
          {"max_length", c.max_length},         {"canonical_length", c.canonical_length},
          {"warp_knots", c.warp_knots},         {"speed_min", c.speed_min},
          {"speed_max", c.speed_max},           {"noise_sigma", c.noise_sigma},
          {"mixing_strength", c.mixing_strength}, {"appearance_amplitude", c.appearance_amplitude}};
}

inline DatasetConfig dataset_config_from_json(const Json& j) {
  DatasetConfig c;
  c.n_processes = j.at("n_processes");
  c.sequences_per_process = j.at("sequences_per_process");
  c.k_phases = j.at("k_phases");
  c.d_latent = j.at("d_latent");
  c.observed_dim = j.at("observed_dim");
  c.min_length = j.at("min_length");
  c.max_length = j.at("max_length");
  c.canonical_length = j.at("canonical_length");
  c.warp_knots = j.at("warp_knots");
  c.speed_min = j.at("speed_min");
  c.speed_max = j.at("speed_max");
  c.noise_sigma = j.at("noise_sigma");
  c.mixing_strength = j.at("mixing_strength");
  c.appearance_amplitude = j.at("appearance_amplitude");
  return c;
}

inline Json to_json(const ModelConfig& c) {
  return {{"input_dim", c.input_dim},         {"hidden_width", c.hidden_width},
          {"hidden_layers", c.hidden_layers}, {"embed_dim", c.embed_dim},
          {"context_radius", c.context_radius}};
}

inline ModelConfig model_config_from_json(const Json& j) {
  return {j.at("input_dim"), j.at("hidden_width"), j.at("hidden_layers"), j.at("embed_dim"),
          j.at("context_radius")};
}

inline Json to_json(const LossConfig& c) {
  return {{"lambda_g", c.lambda_g}, {"lambda_s", c.lambda_s},
          {"gamma", c.gamma},       {"beta", c.beta},
          {"alpha", c.alpha},       {"operator", std::string(to_string(c.kind))},
          {"cost", std::string(to_string(c.cost))}};
}

inline LossConfig loss_config_from_json(const Json& j) {
  LossConfig c;
  c.lambda_g = j.at("lambda_g");
  c.lambda_s = j.at("lambda_s");
  c.gamma = j.at("gamma");
  c.beta = j.at("beta");
  c.alpha = j.at("alpha");
  c.kind = operator_kind_from_string(j.at("operator").get<std::string>());
  c.cost = cost_kind_from_string(j.at("cost").get<std::string>());
  return c;
}

inline Json to_json(const TrainingConfig& c) {
  return {{"frames_per_sequence", c.frames_per_sequence},
          {"batch_pairs", c.batch_pairs},
          {"steps", c.steps},
          {"seed", c.seed},
          {"learning_rate", c.adam.learning_rate},
          {"adam_beta1", c.adam.beta1},
          {"adam_beta2", c.adam.beta2},
          {"adam_epsilon", c.adam.epsilon},
          {"model", to_json(c.model)}};
}

inline TrainingConfig training_config_from_json(const Json& j) {
  TrainingConfig c;
  c.frames_per_sequence = j.at("frames_per_sequence");
  c.batch_pairs = j.at("batch_pairs");
  c.steps = j.at("steps");
  c.seed = j.at("seed");
  c.adam = {j.at("learning_rate"), j.at("adam_beta1"), j.at("adam_beta2"), j.at("adam_epsilon")};
  c.model = model_config_from_json(j.at("model"));
  return c;
}

// ---------------------------------------------------------------------------
// Dataset directory: manifest.json plus sequences/<name>.csv.

inline void save_dataset(const Dataset& ds, const fs::path& dir) {
  Json processes = Json::array();
  for (const auto& p : ds.processes) {
    processes.push_back({{"boundaries", p.boundaries},
                         {"anchors", matrix_to_json(p.anchors)},
                         {"bumps", matrix_to_json(p.bumps)},
                         {"length", p.trajectory.cols()}});
  }
  Json sequences = Json::array();
  for (const auto& s : ds.sequences) {
    const std::string file = "sequences/" + s.name + ".csv";
    write_sequence(dir / file, s.observed);
    sequences.push_back({{"name", s.name},
                         {"file", file},
                         {"process", s.process},
                         {"length", s.observed.length()},
                         {"phases", s.phases},
                         {"canonical_time", s.canonical_time},
                         {"warp", {{"knots", s.warp.knots}, {"speeds", s.warp.speeds}}}});
  }
  const Json manifest{{"format", "smoothdtw-dataset"},
                      {"version", 1},
                      {"seed", ds.seed},
                      {"config", to_json(ds.config)},
                      {"processes", processes},
                      {"sequences", sequences}};
  write_file_atomic(dir / "manifest.json", manifest.dump(1) + "\n");
}

inline Dataset load_dataset(const fs::path& dir) {
  const Json m = parse_json(dir / "manifest.json");
  try {
    if (m.at("format") != "smoothdtw-dataset") throw InvalidArgument("not a dataset manifest");
    Dataset ds;
    ds.seed = m.at("seed");
    ds.config = dataset_config_from_json(m.at("config"));
    for (const auto& p : m.at("processes")) {
      ds.processes.push_back(make_process(p.at("boundaries").get<std::vector<double>>(),
                                          matrix_from_json(p.at("anchors")),
                                          matrix_from_json(p.at("bumps")), p.at("length")));
    }
    for (const auto& s : m.at("sequences")) {
      SequenceRecord r;
      r.name = s.at("name");
      r.process = s.at("process");
      if (r.process < 0 || r.process >= static_cast<int>(ds.processes.size())) {
        throw InvalidArgument("sequence " + r.name + " has an unknown process label");
      }
      r.observed = read_sequence(dir / s.at("file").get<std::string>());
      r.phases = s.at("phases").get<std::vector<int>>();
      r.canonical_time = s.at("canonical_time").get<std::vector<double>>();
      r.warp = {s.at("warp").at("knots").get<std::vector<double>>(),
                s.at("warp").at("speeds").get<std::vector<double>>()};
      r.warp.validate();
      const auto len = static_cast<std::size_t>(r.observed.length());
      if (r.phases.size() != len || r.canonical_time.size() != len || s.at("length") != len) {
        throw InvalidArgument("sequence " + r.name + " length disagrees with its manifest entry");
      }
      ds.sequences.push_back(std::move(r));
    }
    return ds;
  } catch (const Json::exception& e) {
    throw InvalidArgument((dir / "manifest.json").string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Evaluation report.

inline Json to_json(const EvalReport& r) {
  Json pairs = Json::array();
  for (const auto& p : r.pairs) {
    pairs.push_back({{"a", p.a}, {"b", p.b}, {"kendalls_tau", p.kendalls_tau},
                     {"alignment_error", p.alignment_error}});
  }
  Json seqs = Json::array();
  for (const auto& s : r.sequences) seqs.push_back({{"name", s.name}, {"phase_accuracy", s.phase_accuracy}});
  return {{"kendalls_tau", r.kendalls_tau},
          {"mean_alignment_error", r.mean_alignment_error},
          {"phase_accuracy", r.phase_accuracy},
          {"pairs", pairs},
          {"sequences", seqs}};
}

inline EvalReport eval_report_from_json(const Json& j) {
  EvalReport r;
  r.kendalls_tau = j.at("kendalls_tau");
  r.mean_alignment_error = j.at("mean_alignment_error");
  r.phase_accuracy = j.at("phase_accuracy");
  for (const auto& p : j.at("pairs")) {
    r.pairs.push_back({p.at("a"), p.at("b"), p.at("kendalls_tau"), p.at("alignment_error")});
  }
  for (const auto& s : j.at("sequences")) r.sequences.push_back({s.at("name"), s.at("phase_accuracy")});
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoint: model, optimizer moments, generator state and loss trace.

struct Checkpoint {
  TrainingConfig training;
  LossConfig loss;
  TrainerState state;
};

inline Json to_json(const Checkpoint& c) {
  Json layers = Json::array();
  for (const auto& l : c.state.model.layers()) {
    layers.push_back({{"weight", matrix_to_json(l.weight)}, {"bias", vector_to_json(l.bias)}});
  }
  return {{"format", "smoothdtw-checkpoint"},
          {"version", 1},
          {"training", to_json(c.training)},
          {"loss", to_json(c.loss)},
          {"model", {{"config", to_json(c.state.model.config())}, {"layers", layers}}},
          {"step", c.state.step},
          {"optimizer",
           {{"t", c.state.optimizer.steps_taken()},
            {"m", c.state.optimizer.first_moment()},
            {"v", c.state.optimizer.second_moment()}}},
          {"rng", c.state.rng_state()},
          {"loss_trace", c.state.loss_trace}};
}

inline Checkpoint checkpoint_from_json(const Json& j) {
  if (j.at("format") != "smoothdtw-checkpoint") throw InvalidArgument("not a checkpoint");
  Checkpoint c;
  c.training = training_config_from_json(j.at("training"));
  c.loss = loss_config_from_json(j.at("loss"));
  std::vector<DenseLayer> layers;
  for (const auto& l : j.at("model").at("layers")) {
    layers.push_back({matrix_from_json(l.at("weight")), vector_from_json(l.at("bias"))});
  }
  c.state.model = EmbeddingModel(model_config_from_json(j.at("model").at("config")), std::move(layers));
  c.state.optimizer = Adam(c.training.adam, c.state.model.parameter_count());
  c.state.optimizer.restore(j.at("optimizer").at("t"), j.at("optimizer").at("m").get<std::vector<double>>(),
                            j.at("optimizer").at("v").get<std::vector<double>>());
  c.state.set_rng_state(j.at("rng").get<std::string>());
  c.state.step = j.at("step");
  c.state.loss_trace = j.at("loss_trace").get<std::vector<double>>();
  if (c.state.loss_trace.size() != c.state.step) throw InvalidArgument("loss trace does not match step count");
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const fs::path& path) {
  write_file_atomic(path, to_json(c).dump() + "\n");
}

inline Checkpoint load_checkpoint(const fs::path& path) {
  const Json j = parse_json(path);
  try {
    return checkpoint_from_json(j);
  } catch (const Json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

}  // namespace smoothdtw
