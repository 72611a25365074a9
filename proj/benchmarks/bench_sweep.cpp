#include <benchmark/benchmark.h>

#include "dpmlds/deconv.hpp"
#include "dpmlds/mcmc.hpp"

using namespace dpmlds;

// One Gibbs sweep of the deconvolution M1 model after the urn has settled.
static void BM_GibbsSweep(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0));
  DeconvGenerator gen;
  gen.horizon = T;
  RngStream rng(2);
  const auto z = simulate_deconv(gen, rng).z;
  const auto model = build_deconv_statespace(gen.h);
  const auto v = deconv_v_process(DeconvVariant::M1, DeconvPriors{});
  const FiniteMixtureProcess w(
      {{make_atom(GaussianCluster(VectorXd::Zero(1), MatrixXd::Constant(1, 1, gen.sigma_w2))), 1.0}});
  ChainState chain = initialize_chain(*v, w, T, rng);
  for (int i = 0; i < 50; ++i) {
    gibbs_sweep(model, z, chain, rng);
    sample_hyperparameters(chain, rng);
  }
  for (auto _ : state) {
    auto stats = gibbs_sweep(model, z, chain, rng);
    benchmark::DoNotOptimize(stats);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_GibbsSweep)->RangeMultiplier(2)->Range(100, 800)->Complexity(benchmark::oN)
    ->Unit(benchmark::kMillisecond);
