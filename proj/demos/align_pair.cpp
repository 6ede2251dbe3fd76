// Trains a small embedder on a toy dataset and aligns one held-out pair
// before and after training.

#include <cstdio>

#include "smoothdtw/cli.hpp"

using namespace smoothdtw;

int main() {
  DatasetConfig data;
  data.n_processes = 4;
  data.sequences_per_process = 10;
  const Dataset ds = build_dataset(data, 7);
  const auto split = split_dataset(ds, 3);

  TrainingConfig tc;
  tc.steps = 400;
  tc.seed = 7;
  tc.adam.learning_rate = 1e-3;
  const LossConfig loss;

  const auto untrained = initial_state(tc).model;
  const auto result = train(training_groups(ds, split.train), loss, tc);

  const auto& a = ds.sequences[split.test[0]];
  const auto& b = ds.sequences[split.test[1]];
  for (const auto* m : {&untrained, &result.model}) {
    const auto ea = embed(*m, a.observed);
    const auto eb = embed(*m, b.observed);
    std::printf("%s: tau %.3f, alignment error %.4f\n", m == &untrained ? "untrained" : "trained  ",
                kendalls_tau(ea, eb), alignment_error(ea, eb, a.canonical_time, b.canonical_time, loss.beta));
  }

  const auto path = synchronize(embed(result.model, a.observed), embed(result.model, b.observed), loss.beta);
  std::printf("%s (%ld frames) vs %s (%ld frames), path of %zu steps:\n", a.name.c_str(),
              static_cast<long>(a.observed.length()), b.name.c_str(), static_cast<long>(b.observed.length()),
              path.size());
  for (std::size_t k = 0; k < path.size(); k += 8) {
    const auto& c = path.steps[k];
    std::printf("  a[%2ld] t=%.3f  <->  b[%2ld] t=%.3f\n", static_cast<long>(c.i), a.canonical_time[c.i],
                static_cast<long>(c.j), b.canonical_time[c.j]);
  }
  std::printf("loss %.3f -> %.3f over %zu steps\n", result.loss_trace.front(), result.loss_trace.back(),
              result.loss_trace.size());
}
