#pragma once

// Command-line front end: gen, train, align, eval, check-grad, penalty-curves.
// Exit codes: 0 success, 1 validation error, 2 numeric failure, 3 IO error.

#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "smoothdtw/config.hpp"

namespace smoothdtw {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitNumeric = 2, kExitIo = 3 };

// ---------------------------------------------------------------------------
// Pipeline pieces shared by the subcommands and the acceptance suite.

inline std::vector<TrainingGroup> training_groups(const Dataset& ds, const std::vector<std::size_t>& indices) {
  std::vector<TrainingGroup> groups(ds.processes.size());
  for (std::size_t i : indices) groups.at(ds.sequences[i].process).push_back(ds.sequences[i].observed);
  std::erase_if(groups, [](const TrainingGroup& g) { return g.empty(); });
  return groups;
}

inline Embedder model_embedder(const EmbeddingModel& model) {
  return [&model](const SequenceRecord& r) { return embed(model, r.observed); };
}

inline Embedder oracle_embedder(const Dataset& ds) {
  return [&ds](const SequenceRecord& r) { return latent_states(ds, r); };
}

/// Random unnormalized pair for gradient checking; case k of a seed is fixed.
inline std::pair<FeatureSequence, FeatureSequence> grad_check_case(std::uint64_t seed, int k,
                                                                   const GradCheckConfig& g) {
  Prng rng = derived_stream(seed, 20, static_cast<std::uint32_t>(k));
  std::uniform_int_distribution<int> len(1, g.max_length);
  std::uniform_int_distribution<int> dim(1, g.dim);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  const int d = dim(rng);
  auto draw = [&](int m) {
    Matrix x(d, m);
    for (Eigen::Index c = 0; c < m; ++c)
      for (Eigen::Index r = 0; r < d; ++r) x(r, c) = val(rng);
    return FeatureSequence(std::move(x));
  };
  const int m = len(rng);
  const int n = len(rng);
  auto x = draw(m);
  auto y = draw(n);
  return {std::move(x), std::move(y)};
}

struct GradCheckReport {
  double worst = 0.0;
  std::vector<double> per_case;
};

inline GradCheckReport run_grad_check(std::uint64_t seed, const GradCheckConfig& g, const LossConfig& loss) {
  if (loss.gamma == 0.0) {
    throw InvalidArgument("gradient check refused: gamma = 0 selects the hard minimum, which is not differentiable");
  }
  GradCheckReport out;
  for (int k = 0; k < g.cases; ++k) {
    const auto [x, y] = grad_check_case(seed, k, g);
    out.per_case.push_back(finite_difference_check(x, y, loss, g.step));
    out.worst = std::max(out.worst, out.per_case.back());
  }
  return out;
}

/// Columns: delta, smoothMin penalty, min^gamma penalty for the pair (0, delta).
inline std::string penalty_curves_csv(double gamma, double lo, double hi, int samples) {
  if (samples < 2 || !(hi > lo)) throw InvalidArgument("penalty curve range needs hi > lo and >= 2 samples");
  std::string out = "delta,smooth_min_penalty,min_gamma_penalty\n";
  for (int i = 0; i < samples; ++i) {
    const double d = lo + (hi - lo) * i / (samples - 1);
    const std::array<double, 2> a{0.0, d};
    out += format_double(d) + "," + format_double(smooth_min_penalty(a, gamma, OperatorKind::SmoothMin)) + "," +
           format_double(smooth_min_penalty(a, gamma, OperatorKind::MinGamma)) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands.

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
};

namespace detail {

struct LoadedConfig {
  RunConfig cfg;
  std::string text;
};

inline LoadedConfig load_run_config(const CommonOptions& o) {
  LoadedConfig lc;
  if (!o.config_path.empty()) {
    lc.text = read_file(o.config_path);
    lc.cfg = parse_config(lc.text, o.config_path);
  }
  if (o.seed) lc.cfg.seed = *o.seed;
  if (o.threads) lc.cfg.training.threads = *o.threads;
  lc.cfg.finalize();
  lc.cfg.validate();
  return lc;
}

inline Json run_config_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"dataset", to_json(c.dataset)},
          {"loss", to_json(c.loss)},
          {"training", to_json(c.training)},
          {"holdout_per_process", c.holdout_per_process},
          {"check_grad",
           {{"cases", c.check_grad.cases},
            {"max_length", c.check_grad.max_length},
            {"dim", c.check_grad.dim},
            {"step", c.check_grad.step},
            {"tolerance", c.check_grad.tolerance}}}};
}

/// The config file verbatim plus the resolved values (after overrides).
inline void archive_config(const fs::path& dir, const LoadedConfig& lc) {
  write_file_atomic(dir / "config.txt", lc.text);
  write_file_atomic(dir / "resolved_config.json", run_config_json(lc.cfg).dump(1) + "\n");
}

inline fs::path require_out(const CommonOptions& o) {
  if (o.out.empty()) throw ConfigError("--out is required");
  return o.out;
}

}  // namespace detail

inline int cmd_gen(const CommonOptions& o, std::ostream& log) {
  const auto lc = detail::load_run_config(o);
  const fs::path out = detail::require_out(o);
  const Dataset ds = build_dataset(lc.cfg.dataset, lc.cfg.seed);
  save_dataset(ds, out);
  detail::archive_config(out, lc);
  log << "wrote " << ds.sequences.size() << " sequences from " << ds.processes.size() << " processes to "
      << out.string() << "\n";
  return kExitOk;
}

inline std::string loss_trace_csv(const std::vector<double>& trace) {
  std::string out = "step,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) out += std::to_string(i + 1) + "," + format_double(trace[i]) + "\n";
  return out;
}

inline int cmd_train(const CommonOptions& o, const std::string& dataset_override, const std::string& resume,
                     std::ostream& log) {
  const auto lc = detail::load_run_config(o);
  const fs::path out = detail::require_out(o);
  const std::string data_dir = dataset_override.empty() ? lc.cfg.dataset_dir : dataset_override;
  if (data_dir.empty()) throw ConfigError("no dataset: set dataset_dir or pass --dataset");
  const Dataset ds = load_dataset(data_dir);
  if (ds.config.observed_dim != lc.cfg.training.model.input_dim) {
    throw ConfigError("dataset observed_dim " + std::to_string(ds.config.observed_dim) +
                      " differs from the configured dataset.observed_dim " +
                      std::to_string(lc.cfg.training.model.input_dim));
  }
  const auto split = split_dataset(ds, lc.cfg.holdout_per_process);
  const auto groups = training_groups(ds, split.train);
  validate_groups(groups, lc.cfg.training);

  Checkpoint ck{lc.cfg.training, lc.cfg.loss, {}};
  if (resume.empty()) {
    ck.state = initial_state(lc.cfg.training);
  } else {
    Checkpoint prev = load_checkpoint(resume);
    if (!(prev.state.model.config() == lc.cfg.training.model) || prev.training.seed != lc.cfg.training.seed) {
      throw ConfigError("checkpoint " + resume + " was trained with a different model or seed");
    }
    ck.state = std::move(prev.state);
  }
  train_until_done(ck.state, groups, lc.cfg.loss, lc.cfg.training);

  save_checkpoint(ck, out / "checkpoint.json");
  write_file_atomic(out / "loss.csv", loss_trace_csv(ck.state.loss_trace));
  detail::archive_config(out, lc);
  if (!ck.state.loss_trace.empty()) {
    log << "trained " << ck.state.step << " steps, final loss " << ck.state.loss_trace.back() << "\n";
  } else {
    log << "zero steps: checkpoint holds the initialization\n";
  }
  return kExitOk;
}

inline int cmd_align(const std::string& checkpoint, const std::string& a_path, const std::string& b_path,
                     const std::string& out_dir, bool emit_matrix, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const FeatureSequence a = read_sequence(a_path);
  const FeatureSequence b = read_sequence(b_path);
  const auto& model = ck.state.model;
  for (const auto* s : {&a, &b}) {
    if (s->dim() != model.config().input_dim) {
      throw InvalidArgument("sequence dim " + std::to_string(s->dim()) + " does not match checkpoint input dim " +
                            std::to_string(model.config().input_dim));
    }
  }
  const FeatureSequence ea = embed(model, a);
  const FeatureSequence eb = embed(model, b);
  const LossTerms terms = loss_terms(ea, eb, ck.loss);
  const AlignmentPath path = synchronize(ea, eb, ck.loss.beta);
  if (!is_feasible(path, ea.length(), eb.length())) throw NumericFailure("backtracking", "infeasible alignment path");

  Json p = Json::array();
  for (const auto& c : path.steps) p.push_back({c.i + 1, c.j + 1});
  Json result{{"path", p},
              {"align_xy", terms.align_xy},
              {"align_yx", terms.align_yx},
              {"gcc", terms.gcc},
              {"total", terms.total},
              {"kendalls_tau", ea.length() >= 2 && eb.length() >= 2 ? Json(kendalls_tau(ea, eb)) : Json(nullptr)}};
  if (out_dir.empty()) {
    out << result.dump(1) << "\n";
  } else {
    write_file_atomic(fs::path(out_dir) / "alignment.json", result.dump(1) + "\n");
    if (emit_matrix) {
      const auto r = accumulate(detail::pair_cost(ea, eb, ck.loss.cost, ck.loss.beta, CostDirection::XToY),
                                ck.loss.smooth());
      write_file_atomic(fs::path(out_dir) / "accumulated_cost.csv", matrix_to_csv(r.values));
    }
    out << "wrote " << (fs::path(out_dir) / "alignment.json").string() << "\n";
  }
  return kExitOk;
}

inline int cmd_eval(const std::string& checkpoint, const std::string& dataset, int holdout,
                    const std::string& embedding, const std::string& out_dir, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Dataset ds = load_dataset(dataset);
  const auto split = split_dataset(ds, holdout);
  EmbeddingModel model = ck.state.model;
  Embedder embedder;
  if (embedding == "model") {
    embedder = model_embedder(model);
  } else if (embedding == "untrained") {
    model = initial_state(ck.training).model;
    embedder = model_embedder(model);
  } else if (embedding == "oracle") {
    embedder = oracle_embedder(ds);
  } else {
    throw ConfigError("unknown embedding '" + embedding + "' (model, untrained, oracle)");
  }
  const EvalReport report = evaluate(ds, split, embedder, ck.loss.beta);
  const std::string text = to_json(report).dump(1) + "\n";
  if (out_dir.empty()) {
    out << text;
  } else {
    write_file_atomic(fs::path(out_dir) / "report.json", text);
    out << "tau " << report.kendalls_tau << ", alignment error " << report.mean_alignment_error
        << ", phase accuracy " << report.phase_accuracy << "\n";
  }
  return kExitOk;
}

inline int cmd_check_grad(const CommonOptions& o, std::ostream& out) {
  const auto lc = detail::load_run_config(o);
  const auto report = run_grad_check(lc.cfg.seed, lc.cfg.check_grad, lc.cfg.loss);
  const bool ok = report.worst < lc.cfg.check_grad.tolerance;
  out << "operator " << to_string(lc.cfg.loss.kind) << ", " << report.per_case.size()
      << " cases, worst relative error " << report.worst << " (tolerance " << lc.cfg.check_grad.tolerance
      << "): " << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kExitOk : kExitNumeric;
}

/// Parses argv and dispatches. Errors are reported on `err` and mapped to exit codes.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Smooth-DTW sequence alignment with cycle-consistency training"};
  app.require_subcommand(1);
  CommonOptions common;
  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", common.config_path, "key = value config file");
    sub->add_option("--seed", common.seed, "override the config seed");
    sub->add_option("--threads", common.threads, "worker threads for batch evaluation");
    auto* o = sub->add_option("--out", common.out, "output directory");
    if (needs_out) o->required();
  };

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  add_common(gen, true);

  std::string dataset, resume;
  auto* train = app.add_subcommand("train", "train an embedding model");
  add_common(train, true);
  train->add_option("--dataset", dataset, "dataset directory (overrides dataset_dir)");
  train->add_option("--resume", resume, "continue from a checkpoint");

  std::string checkpoint, a_path, b_path, align_out;
  bool emit_matrix = false;
  auto* align = app.add_subcommand("align", "align two sequence files with a trained model");
  align->add_option("--checkpoint", checkpoint)->required();
  align->add_option("--a", a_path, "first sequence CSV")->required();
  align->add_option("--b", b_path, "second sequence CSV")->required();
  align->add_option("--out", align_out, "output directory (default: print to stdout)");
  align->add_flag("--matrix", emit_matrix, "also write the accumulated-cost matrix CSV");

  int holdout = 5;
  std::string embedding = "model", eval_out;
  auto* eval = app.add_subcommand("eval", "evaluate held-out alignment quality");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--dataset", dataset)->required();
  eval->add_option("--holdout", holdout, "held-out sequences per process");
  eval->add_option("--embedding", embedding, "model, untrained or oracle");
  eval->add_option("--out", eval_out, "output directory (default: print to stdout)");

  auto* check = app.add_subcommand("check-grad", "compare analytic and finite-difference gradients");
  add_common(check, false);

  double gamma = 1.0, lo = -4.0, hi = 4.0;
  int samples = 161;
  std::string curves_out;
  auto* curves = app.add_subcommand("penalty-curves", "CSV of both relaxations' penalty for two arguments");
  curves->add_option("--gamma", gamma);
  curves->add_option("--lo", lo);
  curves->add_option("--hi", hi);
  curves->add_option("--samples", samples);
  curves->add_option("--out", curves_out, "output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gen) return cmd_gen(common, out);
    if (*train) return cmd_train(common, dataset, resume, out);
    if (*align) return cmd_align(checkpoint, a_path, b_path, align_out, emit_matrix, out);
    if (*eval) return cmd_eval(checkpoint, dataset, holdout, embedding, eval_out, out);
    if (*check) return cmd_check_grad(common, out);
    if (*curves) {
      const std::string csv = penalty_curves_csv(gamma, lo, hi, samples);
      if (curves_out.empty()) out << csv;
      else write_file_atomic(curves_out, csv);
      return kExitOk;
    }
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericFailure& e) {
    err << "numeric failure in " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace smoothdtw
