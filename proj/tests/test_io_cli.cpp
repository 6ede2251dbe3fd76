#include <gtest/gtest.h>

#include <sstream>

#include "smoothdtw/cli.hpp"
#include "test_support.hpp"

using namespace smoothdtw;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("smoothdtw_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "smoothdtw");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const char* kSmallConfig =
    "# small run\n"
    "seed = 3\n"
    "dataset.n_processes = 2\n"
    "dataset.sequences_per_process = 5\n"
    "dataset.min_length = 20\n"
    "dataset.max_length = 30\n"
    "holdout_per_process = 2\n"
    "train.steps = 6\n"
    "train.frames_per_sequence = 8\n"
    "train.batch_pairs = 2\n"
    "model.hidden_width = 8\n"
    "model.embed_dim = 6\n";

std::string write_config(const TempDir& dir, const std::string& text) {
  const auto p = dir.path() / "run.cfg";
  write_file_atomic(p, text);
  return p.string();
}

}  // namespace

TEST(SequenceCsv, RoundTripIsExact) {
  testing_support::Prng rng(1);
  Matrix m = testing_support::random_matrix(rng, 5, 7, -1e3, 1e3);
  m(0, 0) = 1e-300;
  m(1, 1) = -0.1;
  const FeatureSequence s(m);
  EXPECT_EQ(sequence_from_csv(sequence_to_csv(s), "mem"), s);
}

TEST(SequenceCsv, ParseErrorsNameTheLine) {
  try {
    sequence_from_csv("1,2\n3,x\n", "seq.csv");
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("seq.csv:2"), std::string::npos);
  }
  EXPECT_THROW(sequence_from_csv("1,2\n3\n", "seq.csv"), InvalidArgument);
  EXPECT_THROW(sequence_from_csv("", "seq.csv"), InvalidArgument);
}

TEST(Dataset, SaveLoadRoundTrip) {
  TempDir dir;
  DatasetConfig cfg;
  cfg.n_processes = 2;
  cfg.sequences_per_process = 3;
  const auto ds = build_dataset(cfg, 4);
  save_dataset(ds, dir.path());
  const auto back = load_dataset(dir.path());
  ASSERT_EQ(back.sequences.size(), ds.sequences.size());
  EXPECT_EQ(back.seed, ds.seed);
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    EXPECT_EQ(back.sequences[i].observed, ds.sequences[i].observed);
    EXPECT_EQ(back.sequences[i].canonical_time, ds.sequences[i].canonical_time);
    EXPECT_EQ(back.sequences[i].phases, ds.sequences[i].phases);
    EXPECT_EQ(back.sequences[i].warp.knots, ds.sequences[i].warp.knots);
    EXPECT_EQ(latent_states(back, back.sequences[i]), latent_states(ds, ds.sequences[i]));
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  TrainingConfig tc;
  tc.model = {4, 6, 2, 3, 1};
  tc.steps = 3;
  Checkpoint ck{tc, {}, initial_state(tc)};
  ck.state.loss_trace = {1.5, 0.1 + 0.2, 1e-17};
  ck.state.step = 3;
  std::vector<double> g(ck.state.model.parameter_count(), 0.37);
  auto p = ck.state.model.flatten();
  ck.state.optimizer.step(p, g);
  ck.state.model.assign(p);
  const auto back = checkpoint_from_json(Json::parse(to_json(ck).dump()));
  EXPECT_EQ(back.state.model, ck.state.model);
  EXPECT_EQ(back.state.optimizer.first_moment(), ck.state.optimizer.first_moment());
  EXPECT_EQ(back.state.optimizer.second_moment(), ck.state.optimizer.second_moment());
  EXPECT_EQ(back.state.optimizer.steps_taken(), 1u);
  EXPECT_EQ(back.state.rng_state(), ck.state.rng_state());
  EXPECT_EQ(back.state.loss_trace, ck.state.loss_trace);
}

TEST(EvalReport, RoundTrip) {
  EvalReport r{0.1 + 0.2, 1.0 / 3.0, 0.7, {{"a", "b", -0.25, 0.125}}, {{"a", 2.0 / 3.0}}};
  const auto back = eval_report_from_json(Json::parse(to_json(r).dump()));
  EXPECT_EQ(back.kendalls_tau, r.kendalls_tau);
  EXPECT_EQ(back.mean_alignment_error, r.mean_alignment_error);
  EXPECT_EQ(back.pairs[0].a, "a");
  EXPECT_EQ(back.pairs[0].kendalls_tau, -0.25);
  EXPECT_EQ(back.sequences[0].phase_accuracy, 2.0 / 3.0);
}

TEST(Config, ParsesKeysAndComments) {
  const auto c = parse_config("seed = 9  # trailing\n\nloss.gamma=0.5\nloss.operator = min_gamma\n"
                              "dataset.observed_dim = 8\n");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.training.seed, 9u);
  EXPECT_EQ(c.loss.gamma, 0.5);
  EXPECT_EQ(c.loss.kind, OperatorKind::MinGamma);
  EXPECT_EQ(c.training.model.input_dim, 8);
}

TEST(Config, ErrorsNameFileLineAndKey) {
  auto message = [](const std::string& text) {
    try {
      parse_config(text, "run.cfg");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("seed = 1\nloss.gama = 0.1\n").find("run.cfg:2: unknown key 'loss.gama'"), std::string::npos);
  EXPECT_NE(message("seed = 1\nseed = 2\n").find("run.cfg:2: duplicate key 'seed'"), std::string::npos);
  EXPECT_NE(message("loss.beta = fast\n").find("'loss.beta'"), std::string::npos);
  EXPECT_NE(message("just words\n").find("run.cfg:1"), std::string::npos);
  EXPECT_NE(message("loss.operator = softest\n").find("'loss.operator'"), std::string::npos);
}

TEST(Cli, GenIsByteReproducible) {
  TempDir dir;
  const auto cfg = write_config(dir, kSmallConfig);
  ASSERT_EQ(run({"gen", "--config", cfg, "--out", (dir.path() / "a").string()}).code, 0);
  ASSERT_EQ(run({"gen", "--config", cfg, "--out", (dir.path() / "b").string()}).code, 0);
  EXPECT_EQ(read_file(dir.path() / "a" / "manifest.json"), read_file(dir.path() / "b" / "manifest.json"));
  EXPECT_EQ(read_file(dir.path() / "a" / "sequences" / "p01_s04.csv"),
            read_file(dir.path() / "b" / "sequences" / "p01_s04.csv"));
  EXPECT_EQ(read_file(dir.path() / "a" / "config.txt"), kSmallConfig);
  const auto ds = load_dataset(dir.path() / "a");
  EXPECT_EQ(ds.sequences.size(), 10u);
}

TEST(Cli, DefaultGenListsTenProcesses) {
  TempDir dir;
  ASSERT_EQ(run({"gen", "--out", dir.path().string()}).code, 0);
  const auto m = Json::parse(read_file(dir.path() / "manifest.json"));
  EXPECT_EQ(m.at("sequences").size(), 200u);
  EXPECT_EQ(m.at("processes").size(), 10u);
}

TEST(Cli, TrainZeroStepsEqualsInitialization) {
  TempDir dir;
  const auto cfg = write_config(dir, std::string(kSmallConfig) + "dataset_dir = " + (dir.path() / "data").string() + "\n");
  ASSERT_EQ(run({"gen", "--config", cfg, "--out", (dir.path() / "data").string()}).code, 0);
  const auto zero = write_config(dir, std::string(kSmallConfig).replace(std::string(kSmallConfig).find("train.steps = 6"), 15, "train.steps = 0"));
  ASSERT_EQ(run({"train", "--config", zero, "--dataset", (dir.path() / "data").string(), "--out",
                 (dir.path() / "t0").string()}).code, 0);
  const auto ck = load_checkpoint(dir.path() / "t0" / "checkpoint.json");
  TrainingConfig tc = ck.training;
  EXPECT_EQ(ck.state.model, initial_state(tc).model);
  EXPECT_TRUE(ck.state.loss_trace.empty());
}

TEST(Cli, ResumeMatchesUninterruptedTrace) {
  TempDir dir;
  const auto data = (dir.path() / "data").string();
  const auto cfg6 = write_config(dir, kSmallConfig);
  ASSERT_EQ(run({"gen", "--config", cfg6, "--out", data}).code, 0);
  ASSERT_EQ(run({"train", "--config", cfg6, "--dataset", data, "--out", (dir.path() / "full").string()}).code, 0);

  std::string three = kSmallConfig;
  three.replace(three.find("train.steps = 6"), 15, "train.steps = 3");
  const auto p3 = dir.path() / "three.cfg";
  write_file_atomic(p3, three);
  ASSERT_EQ(run({"train", "--config", p3.string(), "--dataset", data, "--out", (dir.path() / "half").string()}).code, 0);
  ASSERT_EQ(run({"train", "--config", cfg6, "--dataset", data, "--resume",
                 (dir.path() / "half" / "checkpoint.json").string(), "--out", (dir.path() / "resumed").string()})
                .code,
            0);
  EXPECT_EQ(read_file(dir.path() / "full" / "loss.csv"), read_file(dir.path() / "resumed" / "loss.csv"));
  EXPECT_EQ(read_file(dir.path() / "full" / "checkpoint.json"), read_file(dir.path() / "resumed" / "checkpoint.json"));
}

TEST(Cli, AlignAndEvalMatchLibrary) {
  TempDir dir;
  const auto data = (dir.path() / "data").string();
  const auto cfg = write_config(dir, kSmallConfig);
  ASSERT_EQ(run({"gen", "--config", cfg, "--out", data}).code, 0);
  const auto train_dir = (dir.path() / "train").string();
  ASSERT_EQ(run({"train", "--config", cfg, "--dataset", data, "--out", train_dir}).code, 0);
  const auto ckpt = train_dir + "/checkpoint.json";
  const auto a = data + "/sequences/p00_s03.csv";
  const auto b = data + "/sequences/p00_s04.csv";
  const auto out_dir = (dir.path() / "align").string();
  ASSERT_EQ(run({"align", "--checkpoint", ckpt, "--a", a, "--b", b, "--out", out_dir, "--matrix"}).code, 0);

  const auto result = Json::parse(read_file(fs::path(out_dir) / "alignment.json"));
  const auto ck = load_checkpoint(ckpt);
  const auto ea = embed(ck.state.model, read_sequence(a));
  const auto eb = embed(ck.state.model, read_sequence(b));
  const auto terms = loss_terms(ea, eb, ck.loss);
  EXPECT_EQ(result.at("align_xy").get<double>(), terms.align_xy);
  EXPECT_EQ(result.at("align_yx").get<double>(), terms.align_yx);
  EXPECT_EQ(result.at("gcc").get<double>(), terms.gcc);
  AlignmentPath path;
  for (const auto& c : result.at("path")) path.steps.push_back({c[0].get<Eigen::Index>() - 1, c[1].get<Eigen::Index>() - 1});
  EXPECT_TRUE(is_feasible(path, ea.length(), eb.length()));
  EXPECT_TRUE(fs::exists(fs::path(out_dir) / "accumulated_cost.csv"));

  const auto self = run({"align", "--checkpoint", ckpt, "--a", a, "--b", a});
  ASSERT_EQ(self.code, 0);
  EXPECT_EQ(Json::parse(self.out).at("kendalls_tau").get<double>(), 1.0);

  const auto eval_dir = (dir.path() / "eval").string();
  ASSERT_EQ(run({"eval", "--checkpoint", ckpt, "--dataset", data, "--holdout", "2", "--out", eval_dir}).code, 0);
  const auto report = eval_report_from_json(Json::parse(read_file(fs::path(eval_dir) / "report.json")));
  const auto ds = load_dataset(data);
  const auto direct = evaluate(ds, split_dataset(ds, 2), model_embedder(ck.state.model), ck.loss.beta);
  EXPECT_EQ(report.kendalls_tau, direct.kendalls_tau);
  EXPECT_EQ(report.phase_accuracy, direct.phase_accuracy);
}

TEST(Cli, CheckGradPassesAndRefusesHardMin) {
  TempDir dir;
  EXPECT_EQ(run({"check-grad"}).code, 0);
  const auto mg = write_config(dir, "loss.operator = min_gamma\ncheck_grad.cases = 5\n");
  EXPECT_EQ(run({"check-grad", "--config", mg}).code, 0);
  const auto hard = write_config(dir, "loss.gamma = 0\n");
  const auto r = run({"check-grad", "--config", hard});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("gamma = 0"), std::string::npos);
  const auto strict = write_config(dir, "check_grad.tolerance = 1e-30\ncheck_grad.cases = 3\n");
  EXPECT_EQ(run({"check-grad", "--config", strict}).code, 2);
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  EXPECT_EQ(run({"gen", "--config", (dir.path() / "missing.cfg").string(), "--out", dir.path().string()}).code, 3);
  const auto bad = write_config(dir, "train.stpes = 5\n");
  const auto r = run({"gen", "--config", bad, "--out", (dir.path() / "x").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("train.stpes"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir.path() / "x"));
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"gen", "--out", "/proc/smoothdtw_cannot_write_here"}).code, 3);
  EXPECT_EQ(run({"eval", "--checkpoint", (dir.path() / "none.json").string(), "--dataset", "x"}).code, 3);
}

TEST(Cli, PenaltyCurves) {
  const auto r = run({"penalty-curves", "--gamma", "1", "--lo", "0", "--hi", "1", "--samples", "3"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "delta,smooth_min_penalty,min_gamma_penalty");
  std::istringstream in(r.out);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  // Equal arguments: smoothMin penalty 0, min^gamma penalty -gamma log 2.
  EXPECT_EQ(first.substr(0, first.find(',')), "0");
  EXPECT_NEAR(std::stod(first.substr(first.rfind(',') + 1)), -std::log(2.0), 1e-15);
}
