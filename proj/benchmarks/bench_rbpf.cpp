#include <benchmark/benchmark.h>

#include "dpmlds/changepoint.hpp"
#include "dpmlds/rbpf.hpp"

using namespace dpmlds;

// One filter step of the change-point model for N particles.
static void BM_RbpfStep(benchmark::State& state) {
  const ChangePointPriors priors;
  ChangePointSynth synth;
  synth.horizon = 400;
  RngStream gen(3);
  const auto z = synth_changepoint_data(synth, gen).z;
  const auto model = changepoint_model_for(z, priors);
  const auto v = changepoint_v_process(priors);
  const auto w = changepoint_w_process(priors);
  RbpfConfig cfg;
  cfg.particles = static_cast<std::size_t>(state.range(0));
  RngStream rng(4);
  auto ens = rbpf_init(model, cfg, *v, *w, rng);
  std::size_t t = 0;
  for (auto _ : state) {
    if (t == z.size()) {
      state.PauseTiming();
      ens = rbpf_init(model, cfg, *v, *w, rng);
      t = 0;
      state.ResumeTiming();
    }
    ++t;
    auto r = rbpf_step(ens, model, t, z[t - 1], rng);
    benchmark::DoNotOptimize(r);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RbpfStep)->RangeMultiplier(10)->Range(100, 10000)->Complexity(benchmark::oN)
    ->Unit(benchmark::kMicrosecond);
