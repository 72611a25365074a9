#include <benchmark/benchmark.h>

#include "dpmlds/deconv.hpp"
#include "dpmlds/statespace.hpp"

using namespace dpmlds;

namespace {

struct DeconvFixture {
  LinearGaussianModel model;
  ThetaPath theta;
  Series z;

  explicit DeconvFixture(std::size_t T) {
    DeconvGenerator gen;
    gen.horizon = T;
    RngStream rng(1);
    z = simulate_deconv(gen, rng).z;
    model = build_deconv_statespace(gen.h);
    const auto v = make_atom(GaussianCluster(VectorXd::Constant(1, 0.5), MatrixXd::Constant(1, 1, 1.0)));
    const auto w = make_atom(GaussianCluster(VectorXd::Zero(1), MatrixXd::Constant(1, 1, gen.sigma_w2)));
    theta.v.assign(T, v);
    theta.w.assign(T, w);
  }
};

}  // namespace

static void BM_KalmanStep(benchmark::State& state) {
  const DeconvFixture f(1);
  const auto prior = KalmanBelief::prior(f.model);
  for (auto _ : state) {
    auto b = kalman_step(f.model, 1, prior, *f.theta.v[0], *f.theta.w[0], f.z[0]);
    benchmark::DoNotOptimize(b);
  }
}
BENCHMARK(BM_KalmanStep);

static void BM_BackwardInfo(benchmark::State& state) {
  const DeconvFixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto bp = backward_info_recursion(f.model, f.theta, f.z);
    benchmark::DoNotOptimize(bp);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_BackwardInfo)->RangeMultiplier(2)->Range(100, 800)->Complexity(benchmark::oN);

static void BM_KalmanLoglik(benchmark::State& state) {
  const DeconvFixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kalman_loglik(f.model, f.theta, f.z));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KalmanLoglik)->RangeMultiplier(2)->Range(100, 800)->Complexity(benchmark::oN);
