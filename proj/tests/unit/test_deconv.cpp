#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dpmlds/deconv.hpp"
#include "dpmlds/errors.hpp"
#include "helpers.hpp"
#include "oracle.hpp"

using namespace dpmlds;
using namespace testutil;

TEST_SUITE("deconv") {

TEST_CASE("shift-register state space") {
  const auto m1 = build_deconv_statespace(vec({0.7}));
  MatrixXd f1(2, 2);
  f1 << 0.0, 0.0, 1.0, 0.0;
  CHECK(m1.f(1) == f1);
  CHECK(m1.g(1) == vec({1.0, 0.0}));
  MatrixXd h1(1, 2);
  h1 << 1.0, 0.7;
  CHECK(m1.h(1) == h1);
  CHECK(m1.init_cov().cwiseAbs().maxCoeff() == 0.0);

  const auto m3 = build_deconv_statespace(vec({-1.5, 0.5, -0.2}));
  CHECK(m3.g(1) == vec({1.0, 0.0, 0.0, 0.0}));
  // x_t = (v_t, .., v_{t-L}): the lags move down one slot per step.
  const VectorXd x = vec({4.0, 3.0, 2.0, 1.0});
  CHECK(m3.f(1) * x == vec({0.0, 4.0, 3.0, 2.0}));
  CHECK_THROWS_AS(build_deconv_statespace(VectorXd()), ConfigError);
}

TEST_CASE("h posterior without lag energy is the prior") {
  std::vector<VectorXd> x(6, VectorXd::Zero(3));
  const auto z = scalar_series({0.3, -1.0, 2.0, 0.1, 0.0});
  const auto post = h_posterior(x, z, 0.1, 100.0 * MatrixXd::Identity(2, 2));
  CHECK(post.mean.cwiseAbs().maxCoeff() == 0.0);
  CHECK((post.cov - 10.0 * MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("h posterior scalar hand case") {
  // L = 1, one observation with lag v_0 = 2 and z_1 - v_1 = 4.
  const std::vector<VectorXd> x{vec({2.0, 0.0}), vec({1.0, 2.0})};
  const auto post = h_posterior(x, scalar_series({5.0}), 0.5, scalar(1.0));
  CHECK(post.mean(0) == doctest::Approx(8.0 / 5.0));
  CHECK(post.cov(0, 0) == doctest::Approx(0.5 / 5.0));
}

TEST_CASE("h posterior concentrates on the true filter") {
  DeconvGenerator gen;
  gen.horizon = 3000;
  gen.sigma_w2 = 1e-6;
  RngStream rng(3);
  const auto d = simulate_deconv(gen, rng);
  std::vector<VectorXd> x(gen.horizon + 1, VectorXd::Zero(4));
  for (std::size_t t = 1; t <= gen.horizon; ++t) {
    for (Index k = 0; k < 4; ++k) {
      if (t >= static_cast<std::size_t>(k) + 1) x[t](k) = d.v[t - 1 - static_cast<std::size_t>(k)];
    }
  }
  const auto post = h_posterior(x, d.z, gen.sigma_w2, 100.0 * MatrixXd::Identity(3, 3));
  CHECK((post.mean - gen.h).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("joint Gibbs on h and the state path matches the brute-force h posterior") {
  const double sigma_w2 = 0.1, sigma_h = 100.0;
  ThetaPath theta;
  const auto big = scalar_atom(2.0, 0.5), small = scalar_atom(-1.0, 0.1);
  const auto spike = make_atom(GaussianCluster::zero(1));
  const auto noise = scalar_atom(0.0, sigma_w2);
  theta.v = {big, spike, small, big, spike, spike, small, spike};
  theta.w = std::vector<AtomPtr>(theta.v.size(), noise);
  RngStream gen(5);
  const auto z = simulate(build_deconv_statespace(vec({-0.8})), theta, gen);

  // Grid posterior p(h | z, theta) with the dense likelihood.
  const double lo = -3.0, hi = 1.5;
  const int bins = 30, sub = 40;
  std::vector<double> grid_mass(static_cast<std::size_t>(bins), 0.0);
  for (int b = 0; b < bins; ++b) {
    for (int s = 0; s < sub; ++s) {
      const double h = lo + (hi - lo) * (b + (s + 0.5) / sub) / bins;
      const auto m = build_deconv_statespace(vec({h}));
      const double lp = -0.5 * h * h / (sigma_w2 * sigma_h) + oracle::DenseSystem(m, theta).loglik(z);
      grid_mass[static_cast<std::size_t>(b)] += std::exp(lp);
    }
  }
  const double tot = std::accumulate(grid_mass.begin(), grid_mass.end(), 0.0);
  for (auto& g : grid_mass) g /= tot;

  RngStream rng(6);
  VectorXd h = vec({0.0});
  std::vector<double> hist(static_cast<std::size_t>(bins), 0.0);
  const int iters = 20000;
  int inside = 0;
  for (int i = 0; i < iters; ++i) {
    const auto x = simulation_smoother(build_deconv_statespace(h), theta, z, rng);
    h = sample_h_posterior(x, z, sigma_w2, sigma_h * MatrixXd::Identity(1, 1), rng);
    const int b = static_cast<int>(std::floor((h(0) - lo) / (hi - lo) * bins));
    if (b >= 0 && b < bins) {
      hist[static_cast<std::size_t>(b)] += 1.0;
      ++inside;
    }
  }
  CHECK(inside > 0.99 * iters);
  for (auto& x : hist) x /= iters;
  CHECK(oracle::total_variation(hist, grid_mass) < 0.1);
}

TEST_CASE("noise variance posterior") {
  std::vector<VectorXd> x(121, VectorXd::Zero(4));
  const VectorXd h = vec({-1.5, 0.5, -0.2});
  Series zero(120, vec({0.0}));
  const auto p0 = sigma_w2_posterior(x, zero, h, 2.0, 0.1);
  CHECK(p0.shape == doctest::Approx(62.0));
  CHECK(p0.scale == doctest::Approx(0.1));

  RngStream rng(7);
  Series z;
  double ss = 0.0;
  for (int t = 0; t < 120; ++t) {
    const double e = std::sqrt(0.3) * rng.normal();
    z.push_back(vec({e}));
    ss += e * e;
  }
  const auto p = sigma_w2_posterior(x, z, h, 2.0, 0.1);
  CHECK(p.scale == doctest::Approx(0.1 + 0.5 * ss));
  double s = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) s += sample_sigma_w2_posterior(x, z, h, 2.0, 0.1, rng);
  CHECK(s / n == doctest::Approx(p.scale / (p.shape - 1.0)).epsilon(0.05));
}

TEST_CASE("generator") {
  DeconvGenerator gen;
  gen.lambda = 0.0;
  RngStream rng(8);
  const auto d = simulate_deconv(gen, rng);
  CHECK(std::all_of(d.v.begin(), d.v.end(), [](double v) { return v == 0.0; }));
  CHECK(d.z.size() == 120);

  gen.lambda = 0.4;
  gen.horizon = 20000;
  RngStream r2(9);
  const auto d2 = simulate_deconv(gen, r2);
  const double nz = static_cast<double>(std::count_if(d2.v.begin(), d2.v.end(), [](double v) { return v != 0.0; }));
  CHECK(std::abs(nz / 20000.0 - 0.4) < 3.0 * std::sqrt(0.24 / 20000.0));

  RngStream a(10), b(10);
  const auto da = simulate_deconv(DeconvGenerator{}, a), db = simulate_deconv(DeconvGenerator{}, b);
  CHECK(da.v == db.v);
  CHECK(da.z == db.z);

  DeconvGenerator bad;
  bad.sigma_w2 = 0.0;
  CHECK_THROWS_AS(simulate_deconv(bad, a), ConfigError);
}

TEST_CASE("variants") {
  for (auto v : all_variants()) CHECK(parse_variant(variant_name(v)) == v);
  CHECK_THROWS_AS(parse_variant("M9"), ConfigError);
  const DeconvPriors p;
  auto m1 = deconv_v_process(DeconvVariant::M1, p);
  CHECK(dynamic_cast<SpikeDpmProcess*>(m1.get()) != nullptr);
  CHECK(m1->summary().alpha == p.alpha_init);
  auto m2 = deconv_v_process(DeconvVariant::M2, p);
  auto* fm2 = dynamic_cast<FiniteMixtureProcess*>(m2.get());
  REQUIRE(fm2 != nullptr);
  REQUIRE(fm2->components().size() == 3);
  CHECK(fm2->components()[0].weight == doctest::Approx(0.6));
  CHECK(fm2->components()[1].weight == doctest::Approx(0.28));
  CHECK(fm2->components()[2].weight == doctest::Approx(0.12));
  auto m3 = deconv_v_process(DeconvVariant::M3, p);
  REQUIRE(dynamic_cast<FiniteMixtureProcess*>(m3.get()) != nullptr);
  const auto& c3 = dynamic_cast<FiniteMixtureProcess*>(m3.get())->components();
  REQUIRE(c3.size() == 2);
  CHECK(c3[1].atom->mean()(0) == doctest::Approx(1.1));
  CHECK(c3[1].atom->cov()(0, 0) == doctest::Approx(2.3));
  const double fixed[] = {0.1, 1.0, 10.0, 100.0};
  const DeconvVariant fv[] = {DeconvVariant::M4, DeconvVariant::M5, DeconvVariant::M6, DeconvVariant::M7};
  for (int i = 0; i < 4; ++i) CHECK(deconv_v_process(fv[i], p)->summary().alpha == fixed[i]);
}

TEST_CASE("e_MSE") {
  CHECK(e_mse({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == 0.0);
  CHECK(e_mse({0.0, 0.0}, {3.0, 4.0}) == doctest::Approx(std::sqrt(12.5)));
  CHECK_THROWS(e_mse({1.0}, {1.0, 2.0}));
}

TEST_CASE("oracle mixture beats the misspecified mixture in the median") {
  DeconvBenchConfig cfg;
  cfg.variants = {DeconvVariant::M2, DeconvVariant::M3};
  for (std::uint64_t s = 1; s <= 10; ++s) cfg.seeds.push_back(s);
  cfg.burn_in = 750;
  cfg.retained = 250;
  const auto rows = run_deconv_benchmark(cfg);
  REQUIRE(rows.size() == 2);
  CAPTURE(rows[0].median);
  CAPTURE(rows[1].median);
  CHECK(rows[0].median <= rows[1].median);
}

TEST_CASE("deconvolution runs are reproducible") {
  RngStream rng(12);
  const auto d = simulate_deconv(DeconvGenerator{}, rng);
  DeconvRunConfig cfg;
  cfg.burn_in = 30;
  cfg.retained = 20;
  cfg.seed = 4;
  const auto a = run_deconv(d.z, &d.v, cfg);
  const auto b = run_deconv(d.z, &d.v, cfg);
  CHECK(a.v_mmse == b.v_mmse);
  CHECK(a.e_mse == b.e_mse);
  CHECK(a.h_trace.size() == 50);
  CHECK(a.alpha_trace.front() == 100.0);
  cfg.initial_h = vec({1.0});
  CHECK_THROWS_AS(run_deconv(d.z, &d.v, cfg), ConfigError);
}

}  // TEST_SUITE
