// Quick look at PID pressure tracking on the stock lung: a gentle and an
// aggressive gain pair on the same breath, plus the first-breath trace.
#include <cstdio>

#include "ventlab/bench.hpp"

using namespace ventlab;

int main() {
  const TimeGrid grid;
  const LungParams lp;
  const auto suite = benchmark_suite(lp.peep, grid);
  const BenchOpts opts{4, 123};

  const Policy gentle{PidCoeffs{2.0, 0.5, 0.0, grid.insp_steps}, 0.0, {}, {}};
  const Policy aggressive{PidCoeffs{8.0, 2.0, 0.0, grid.insp_steps}, 0.0, {}, {}};

  const BenchRun a = bench_run(gentle, lp, suite, grid, opts);
  const BenchRun b = bench_run(aggressive, lp, suite, grid, opts);

  std::printf("inspiratory-phase MAE over %d breaths (cmH2O)\n", opts.n_breaths);
  std::printf("%6s  %-12s  %-12s\n", "PIP", "P=2 I=0.5", "P=8 I=2");
  for (size_t wi = 0; wi < suite.size(); ++wi)
    std::printf("%6.0f  %-12.3f  %-12.3f\n", suite[wi].pip, a.score.per_waveform[wi],
                b.score.per_waveform[wi]);
  std::printf("%6s  %-12.3f  %-12.3f\n", "mean", a.score.overall, b.score.overall);

  const size_t wi = suite.size() / 2;
  std::printf("\nfirst breath at PIP %.0f (t, target, gentle, aggressive)\n", suite[wi].pip);
  for (int t = 0; t < grid.insp_steps; t += 4)
    std::printf("%4.2fs  %6.2f  %6.2f  %6.2f\n", t * grid.dt, suite[wi].at(t),
                a.runs[wi].rollout.pressures.values[t], b.runs[wi].rollout.pressures.values[t]);
  return 0;
}
