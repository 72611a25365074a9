// Acceptance runner: one PASS/FAIL line per criterion. Tolerances and
// budgets are fixed here; `--criterion N` runs a single one.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dpmlds/changepoint.hpp"
#include "dpmlds/deconv.hpp"
#include "dpmlds/dpm.hpp"
#include "dpmlds/experiment.hpp"
#include "dpmlds/mcmc.hpp"
#include "dpmlds/rbpf.hpp"
#include "dpmlds/statespace.hpp"
#include "oracle.hpp"
#include "toy.hpp"
#include "unit/helpers.hpp"

using namespace dpmlds;
using namespace testutil;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [failed]");
  }
};

std::string fmt(double x, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << x;
  return s.str();
}

std::size_t draw_index(RngStream& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)));
}

double max_abs(const MatrixXd& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

double mean_of(const std::vector<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double median_of(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double log_sum_exp(const std::vector<double>& xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

// --- 1 -----------------------------------------------------------------------

void criterion_1(Verdict& v) {
  const auto t0 = Clock::now();
  RngStream rng(2024);
  double worst_info = 0.0, worst_diff = 0.0;
  for (int c = 0; c < 50; ++c) {
    const Index nx = 1 + static_cast<Index>(draw_index(rng, 3));
    const Index nz = 1 + static_cast<Index>(draw_index(rng, 2));
    const Index nv = 1 + static_cast<Index>(draw_index(rng, static_cast<std::size_t>(nx)));
    const std::size_t T = 1 + draw_index(rng, 10);
    const auto m = random_model(nx, nz, nv, rng);
    const auto th = random_theta(m, T, rng);
    const auto z = simulate(m, th, rng);

    const auto bp = backward_info_recursion(m, th, z);
    for (std::size_t t = 0; t <= T; ++t) {
      const auto fut = oracle::future_information(m, th, z, t, t + 1);
      const double scale = std::max({1.0, max_abs(fut.info_mat), max_abs(fut.info_vec)});
      worst_info = std::max(worst_info, max_abs(bp.future[t].info_mat - fut.info_mat) / scale);
      worst_info = std::max(worst_info, max_abs(bp.future[t].info_vec - fut.info_vec) / scale);
    }

    const auto filtered = kalman_filter(m, th, z);
    std::vector<AtomPtr> cand_v{random_atom(nv, rng), random_atom(nv, rng),
                                make_atom(GaussianCluster::zero(nv))};
    std::vector<AtomPtr> cand_w{random_atom(nz, rng), th.w[0]};
    for (std::size_t t = 1; t <= T; ++t) {
      double ref_c = 0.0, ref_f = 0.0;
      bool first = true;
      for (const auto& cv : cand_v) {
        for (const auto& cw : cand_w) {
          ThetaPath alt = th;
          alt.v[t - 1] = cv;
          alt.w[t - 1] = cw;
          const auto fwd = kalman_step(m, t, filtered[t - 1], *cv, *cw, z[t - 1]);
          const double comb = combined_loglik_at(m, t, fwd, bp.future[t]);
          const double full = kalman_loglik(m, alt, z);
          if (first) {
            ref_c = comb;
            ref_f = full;
            first = false;
            continue;
          }
          const double err = std::abs((comb - ref_c) - (full - ref_f)) / std::max(1.0, std::abs(full));
          worst_diff = std::max(worst_diff, err);
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  v.require(worst_info < 1e-8, "backward information max rel err " + fmt(worst_info, 3) + " < 1e-8");
  v.require(worst_diff < 1e-8, "likelihood-difference max rel err " + fmt(worst_diff, 3) + " < 1e-8");
  v.require(secs < 10.0, "runtime " + fmt(secs, 3) + " s < 10 s");
}

// --- 2 -----------------------------------------------------------------------

void criterion_2(Verdict& v) {
  const auto t0 = Clock::now();
  const std::vector<double> zs{0.7, -0.4};
  double worst_stat = 0.0, worst_tv = 0.0;
  for (int kind = 0; kind < 3; ++kind) {
    const auto toy = toy::make_toy(kind, zs);
    const auto post = toy::enumerate(toy);
    for (bool joint : {true, false}) {
      const auto k = toy::sweep_kernel(toy, post, SweepOptions{joint});
      VectorXd pi(static_cast<Index>(post.prob.size()));
      for (std::size_t i = 0; i < post.prob.size(); ++i) pi(static_cast<Index>(i)) = post.prob[i];
      worst_stat = std::max(worst_stat, (oracle::stationary(k) - pi).cwiseAbs().maxCoeff());
    }

    // Filtering law of theta_{1:t} given z_{1:t} against the particle paths.
    RbpfConfig cfg;
    cfg.particles = 10000;
    cfg.lag = 1;
    RngStream rng(300 + static_cast<std::uint64_t>(kind));
    auto ens = rbpf_init(toy.model, cfg, *toy.v_prior, *toy.w_prior, rng);
    for (std::size_t t = 1; t <= zs.size(); ++t) {
      rbpf_step(ens, toy.model, t, toy.z[t - 1], rng);
      const Series zt(toy.z.begin(), toy.z.begin() + static_cast<std::ptrdiff_t>(t));
      const auto exact = oracle::enumerate_posterior(toy.model, zt, *toy.v_prior, toy.v_atoms,
                                                     *toy.w_prior, toy.w_atoms);
      const auto wts = ens.weights();
      std::vector<double> freq(exact.states.size(), 0.0);
      for (std::size_t i = 0; i < wts.size(); ++i) {
        ThetaPath path;
        for (const auto& r : ens.particles[i].window) {
          path.v.push_back(r.v);
          path.w.push_back(r.w);
        }
        const std::size_t s = toy::state_index(exact, path);
        if (s < freq.size()) freq[s] += wts[i];
      }
      worst_tv = std::max(worst_tv, oracle::total_variation(freq, exact.prob));
    }
  }
  const double secs = seconds_since(t0);
  v.require(worst_stat < 1e-10, "kernel stationary law max err " + fmt(worst_stat, 3) + " < 1e-10");
  v.require(worst_tv < 0.05, "RBPF filtering TV " + fmt(worst_tv, 3) + " < 0.05");
  v.require(secs < 60.0, "runtime " + fmt(secs, 3) + " s < 60 s");
}

// --- 3 -----------------------------------------------------------------------

void criterion_3(Verdict& v) {
  const auto t0 = Clock::now();
  const double alpha = 1.0;
  const DpHyper hyper{alpha, BaseMeasure(scalar_niw(0.0, 1.0, 4.0, 1.0))};
  // Event B = {mean < 0} has G0(B) = 1/2 by symmetry.
  const double g0 = 0.5;
  RngStream rng(3);
  const int n = 100000;
  std::vector<double> gs;
  gs.reserve(n);
  for (int i = 0; i < n; ++i) {
    const auto d = stick_breaking(hyper, default_truncation(alpha, 100), rng);
    double g = g0 * d.residual;
    for (std::size_t k = 0; k < d.weights.size(); ++k) {
      if (d.atoms[k]->mean()(0) < 0.0) g += d.weights[k];
    }
    gs.push_back(g);
  }
  const double mean = mean_of(gs);
  double m2 = 0.0, m4 = 0.0;
  for (double g : gs) {
    const double d = g - mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m4 /= n;
  const double expect_mean = g0, expect_var = g0 * (1.0 - g0) / (1.0 + alpha);
  const double se_mean = std::sqrt(expect_var / n), se_var = std::sqrt((m4 - m2 * m2) / n);
  v.require(std::abs(mean - expect_mean) < 3.0 * se_mean,
            "E[G(B)] " + fmt(mean, 5) + " vs " + fmt(expect_mean) + " within 3 sigma");
  v.require(std::abs(m2 - expect_var) < 3.0 * se_var,
            "var G(B) " + fmt(m2, 5) + " vs " + fmt(expect_var, 5) + " within 3 sigma");

  const BaseMeasure base(scalar_niw(0.0, 1.0, 4.0, 1.0));
  const std::size_t items = 100;
  const int reps = 20000;
  double total = 0.0;
  for (int r = 0; r < reps; ++r) {
    ClusterRegistry reg;
    for (std::size_t i = 0; i < items; ++i) reg.add(sample_urn(polya_conditional(reg, alpha), base, rng));
    total += static_cast<double>(reg.distinct());
  }
  const double urn = total / reps;
  const double exact = exact_expected_clusters(alpha, items);
  const double antoniak = antoniak_expected_clusters(alpha, items);
  v.require(std::abs(urn / exact - 1.0) < 0.05,
            "urn clusters " + fmt(urn) + " vs exact " + fmt(exact) + " within 5%");
  v.require(std::abs(urn / antoniak - 1.0) < 0.10,
            "urn clusters " + fmt(urn) + " vs alpha log(1+n/alpha) " + fmt(antoniak) +
                " within 10% (off by " + fmt(100.0 * std::abs(urn / antoniak - 1.0), 3) + "%)");
  const double secs = seconds_since(t0);
  v.require(secs < 60.0, "runtime " + fmt(secs, 3) + " s < 60 s");
}

// --- 4 -----------------------------------------------------------------------

double alpha_tv(std::size_t m, std::size_t n, const AlphaPrior& prior, std::uint64_t seed) {
  // Grid posterior on bins of width 0.25 up to 8 plus an overflow bin.
  std::vector<double> edges;
  for (double e = 0.0; e < 8.0 + 1e-9; e += 0.25) edges.push_back(e);
  std::vector<double> mass(edges.size(), 0.0);
  auto dens = [&](double a) { return std::exp(alpha_log_posterior(std::max(a, 1e-12), m, n, &prior)); };
  auto integrate = [&](double a, double b, int k) {
    const double h = (b - a) / k;
    double s = 0.5 * (dens(a) + dens(b));
    for (int i = 1; i < k; ++i) s += dens(a + i * h);
    return s * h;
  };
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) mass[i] = integrate(edges[i], edges[i + 1], 400);
  mass.back() = integrate(edges.back(), 300.0, 60000);
  const double tot = std::accumulate(mass.begin(), mass.end(), 0.0);
  for (auto& x : mass) x /= tot;

  RngStream rng(seed);
  const int iters = 100000;
  std::vector<double> hist(edges.size(), 0.0);
  double a = prior.eta / prior.nu;
  for (int i = 0; i < iters; ++i) {
    a = sample_alpha_mh(a, m, n, prior, rng);
    a = sample_alpha_log_rw(a, m, n, prior, 0.7, rng);
    const auto it = std::upper_bound(edges.begin(), edges.end(), a);
    const std::size_t k = static_cast<std::size_t>(it - edges.begin());
    hist[k == 0 ? 0 : k - 1] += 1.0 / iters;
  }
  return oracle::total_variation(hist, mass);
}

void criterion_4(Verdict& v) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::size_t n = 1; n <= 200; ++n) {
    const auto row = stirling_first_kind_log(n);
    for (double alpha : {0.1, 1.0, 3.7, 25.0}) {
      std::vector<double> terms;
      for (std::size_t k = 1; k <= n; ++k) terms.push_back(row[k - 1] + static_cast<double>(k) * std::log(alpha));
      double rising = 0.0;
      for (std::size_t i = 0; i < n; ++i) rising += std::log(alpha + static_cast<double>(i));
      worst = std::max(worst, std::abs(log_sum_exp(terms) - rising) / std::max(1.0, std::abs(rising)));
    }
  }
  v.require(worst < 1e-10, "Stirling row identity max rel err " + fmt(worst, 3) + " < 1e-10");
  const AlphaPrior prior{3.0, 3.0};
  const double tv1 = alpha_tv(3, 10, prior, 41);
  const double tv2 = alpha_tv(1, 120, prior, 42);
  const double tv3 = alpha_tv(12, 120, prior, 43);
  v.require(std::max({tv1, tv2, tv3}) < 0.05,
            "alpha chain vs grid TV " + fmt(tv1, 3) + ", " + fmt(tv2, 3) + ", " + fmt(tv3, 3) + " < 0.05");
  const double secs = seconds_since(t0);
  v.require(secs < 60.0, "runtime " + fmt(secs, 3) + " s < 60 s");
}

// --- 5 and 6 -------------------------------------------------------------------

struct DeconvBench {
  std::vector<DeconvBenchRow> rows;
  std::vector<std::vector<double>> m1_density;  // per seed
  std::vector<double> grid_y;
  double seconds = 0.0;
};

GridSpec density_spec() {
  GridSpec g;
  g.lo = -4.0;
  g.hi = 5.0;
  g.points = 181;
  g.mc_draws = 4000;
  g.seed = 17;
  return g;
}

const DeconvBench& deconv_bench(bool with_m2_m4) {
  static std::map<bool, DeconvBench> cache;
  if (cache.count(true)) return cache.at(true);
  if (cache.count(with_m2_m4)) return cache.at(with_m2_m4);
  DeconvBench& b = cache[with_m2_m4];
  DeconvBenchConfig cfg;
  cfg.variants = {DeconvVariant::M1};
  if (with_m2_m4) {
    cfg.variants.push_back(DeconvVariant::M2);
    cfg.variants.push_back(DeconvVariant::M4);
  }
  for (std::uint64_t s = 1; s <= 10; ++s) cfg.seeds.push_back(s);
  cfg.burn_in = 1875;
  cfg.retained = 625;
  const auto t0 = Clock::now();
  b.rows = run_deconv_benchmark(cfg, [&](DeconvVariant var, std::uint64_t, const DeconvResult& r) {
    if (var != DeconvVariant::M1) return;
    const auto d = density_grid(r.trace, density_spec());
    b.grid_y = d.y;
    b.m1_density.push_back(d.density);
  });
  b.seconds = seconds_since(t0);
  return b;
}

const DeconvBenchRow& row_for(const DeconvBench& b, DeconvVariant var) {
  for (const auto& r : b.rows) {
    if (r.variant == var) return r;
  }
  throw std::logic_error("variant missing from benchmark");
}

void criterion_5(Verdict& v) {
  const auto& b = deconv_bench(true);
  const auto& m1 = row_for(b, DeconvVariant::M1);
  const auto& m2 = row_for(b, DeconvVariant::M2);
  const auto& m4 = row_for(b, DeconvVariant::M4);
  std::string per_seed;
  for (double e : m1.e_mse) per_seed += (per_seed.empty() ? "" : " ") + fmt(e, 3);
  v.require(m1.mean >= 0.15 && m1.mean <= 0.40,
            "M1 mean e_MSE " + fmt(m1.mean) + " +- " + fmt(m1.stddev, 3) + " in [0.15, 0.40] (seeds: " +
                per_seed + ")");
  v.require(m2.median <= m1.median, "M2 median " + fmt(m2.median) + " <= M1 median " + fmt(m1.median));
  v.require(m4.median >= 1.5 * m1.median,
            "M4 median " + fmt(m4.median) + " >= 1.5 x M1 median " + fmt(1.5 * m1.median));
  v.require(b.seconds < 1800.0, "runtime " + fmt(b.seconds, 4) + " s < 1800 s");
}

void criterion_6(Verdict& v) {
  const auto& b = deconv_bench(false);
  std::vector<double> pooled(b.grid_y.size(), 0.0);
  for (const auto& d : b.m1_density) {
    for (std::size_t i = 0; i < d.size(); ++i) pooled[i] += d[i] / static_cast<double>(b.m1_density.size());
  }
  std::vector<double> maxima;
  for (std::size_t i = 1; i + 1 < pooled.size(); ++i) {
    if (pooled[i] > pooled[i - 1] && pooled[i] >= pooled[i + 1]) maxima.push_back(b.grid_y[i]);
  }
  auto near = [&](double c) {
    return std::any_of(maxima.begin(), maxima.end(), [&](double y) { return std::abs(y - c) <= 0.5; });
  };
  std::string where;
  for (double y : maxima) where += (where.empty() ? "" : " ") + fmt(y, 3);
  v.require(maxima.size() >= 2, "pooled density local maxima at {" + where + "}");
  v.require(near(2.0), "a maximum within 0.5 of 2");
  v.require(near(-1.0), "a maximum within 0.5 of -1");
}

// --- 7 -----------------------------------------------------------------------

void criterion_7(Verdict& v) {
  const auto t0 = Clock::now();
  const ChangePointPriors priors;
  int mcmc_all = 0, rbpf_two = 0;
  std::size_t alarms = 0, others = 0;
  std::string mcmc_hits, rbpf_hits;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ChangePointSynth synth;
    RngStream gen(1000 + seed);
    const auto data = synth_changepoint_data(synth, gen);

    ChainConfig cc;
    cc.burn_in = 500;
    cc.retained = 500;
    cc.seed = seed;
    cc.keep_smoothed_means = false;
    const auto trace = run_changepoint_mcmc(data.z, priors, cc);
    const auto dm = evaluate_detection(jump_posterior(trace), data.jump_times, priors.threshold);
    mcmc_all += dm.hits == data.jump_times.size() ? 1 : 0;
    alarms += dm.false_alarms;
    others += data.z.size() - data.jump_times.size();
    mcmc_hits += std::to_string(dm.hits);

    RbpfConfig rc;
    rc.particles = 1000;
    rc.lag = 10;
    rc.seed = seed;
    const auto run = run_changepoint_rbpf(data.z, priors, rc);
    const auto dr = evaluate_detection(jump_posterior(run), data.jump_times, priors.threshold);
    rbpf_two += dr.hits >= 2 ? 1 : 0;
    alarms += dr.false_alarms;
    others += data.z.size() - data.jump_times.size();
    rbpf_hits += std::to_string(dr.hits);
  }
  const double far = static_cast<double>(alarms) / static_cast<double>(others);
  const double secs = seconds_since(t0);
  v.require(mcmc_all >= 8, "MCMC detects all 3 jumps in " + std::to_string(mcmc_all) +
                               "/10 seeds (hits per seed " + mcmc_hits + ")");
  v.require(rbpf_two >= 8, "RBPF detects >= 2 jumps in " + std::to_string(rbpf_two) +
                               "/10 seeds (hits per seed " + rbpf_hits + ")");
  v.require(far < 0.10, "false-alarm rate " + fmt(far, 3) + " < 0.10");
  v.require(secs < 900.0, "runtime " + fmt(secs, 4) + " s < 900 s");
}

// --- 8 -----------------------------------------------------------------------

struct SweepBench {
  LinearGaussianModel model;
  Series z;
  ChainState state;
  RngStream rng;

  explicit SweepBench(std::size_t T) : rng(8) {
    DeconvGenerator gen;
    gen.horizon = T;
    z = simulate_deconv(gen, rng).z;
    model = build_deconv_statespace(gen.h);
    const auto v_proc = deconv_v_process(DeconvVariant::M1, DeconvPriors{});
    const FiniteMixtureProcess w_proc({{scalar_atom(0.0, gen.sigma_w2), 1.0}});
    state = initialize_chain(*v_proc, w_proc, T, rng);
    // Reach the posterior cluster count before timing.
    for (int i = 0; i < 100; ++i) {
      gibbs_sweep(model, z, state, rng);
      sample_hyperparameters(state, rng);
    }
  }

  double time_sweeps(int k) {
    const auto t0 = Clock::now();
    for (int i = 0; i < k; ++i) gibbs_sweep(model, z, state, rng);
    return seconds_since(t0) / k;
  }
};

void criterion_8(Verdict& v) {
  // Each round times both horizons back to back; the median ratio over
  // rounds filters host noise.
  SweepBench b200(200), b400(400);
  std::vector<double> ratios, t200, t400;
  for (int round = 0; round < 21; ++round) {
    t200.push_back(b200.time_sweeps(5));
    t400.push_back(b400.time_sweeps(5));
    ratios.push_back(t400.back() / t200.back());
  }
  const double ratio = median_of(ratios);
  v.require(ratio < 2.5, "sweep time T=400 / T=200 = " + fmt(ratio, 3) + " < 2.5 (median " +
                             fmt(median_of(t200) * 1e3, 3) + " ms, " + fmt(median_of(t400) * 1e3, 3) +
                             " ms)");

  // Per-step particle filter time against t, with the number of distinct
  // clusters as a covariate so that urn growth is not charged to t. Timer
  // noise is autocorrelated, so the regression runs on 20-step block means
  // of the per-step median over repeated identical runs.
  ChangePointSynth synth;
  synth.horizon = 500;
  RngStream gen(9);
  const auto data = synth_changepoint_data(synth, gen);
  RbpfConfig rc;
  rc.particles = 500;
  rc.seed = 9;
  const std::size_t T = data.z.size();
  const int repeats = 5;
  std::vector<std::vector<double>> per_step(T);
  std::vector<double> distinct(T);
  for (int r = 0; r < repeats; ++r) {
    const auto run = run_changepoint_rbpf(data.z, ChangePointPriors{}, rc);
    for (std::size_t t = 0; t < T; ++t) {
      per_step[t].push_back(run.steps[t].step_seconds);
      distinct[t] = run.steps[t].mean_distinct_v;
    }
  }
  const std::size_t block = 20;
  const Index n = static_cast<Index>(T / block);
  MatrixXd x = MatrixXd::Zero(n, 3);
  VectorXd y = VectorXd::Zero(n);
  for (std::size_t t = 0; t < static_cast<std::size_t>(n) * block; ++t) {
    const Index b = static_cast<Index>(t / block);
    y(b) += median_of(per_step[t]) / block;
    x(b, 1) += static_cast<double>(t + 1) / block;
    x(b, 2) += distinct[t] / block;
  }
  x.col(0).setOnes();
  const bool covariate = (x.col(2).array() - x(0, 2)).abs().maxCoeff() > 1e-9;
  const Index p = covariate ? 3 : 2;
  const MatrixXd xp = x.leftCols(p);
  const MatrixXd xtx_inv = (xp.transpose() * xp).inverse();
  const VectorXd beta = xtx_inv * xp.transpose() * y;
  const VectorXd resid = y - xp * beta;
  const double s2 = resid.squaredNorm() / static_cast<double>(n - p);
  const double tstat = beta(1) / std::sqrt(s2 * xtx_inv(1, 1));
  v.require(std::abs(tstat) < 3.0,
            "per-step time slope " + fmt(beta(1) * 1e6, 3) + " us/step (t = " + fmt(tstat, 3) +
                ", |t| < 3; mean step " + fmt(y.mean() * 1e3, 3) + " ms)");
}

// --- 9 -----------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void criterion_9(Verdict& v) {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "dpmlds_acceptance_9";
  fs::remove_all(root);
  RunOptions quiet;
  quiet.quiet = true;

  auto sim = parse_experiment_config(R"({"mode": "simulate", "seed": 21, "generator": {"preset": "deconv"}})");
  const std::string data = (root / "sim" / "data.csv").string();
  const std::string truth = (root / "sim" / "truth.csv").string();
  auto cp_sim = parse_experiment_config(
      R"({"mode": "simulate", "seed": 22, "generator": {"preset": "changepoint", "horizon": 60, "forced_jumps": [8, 20, 50]}})");
  const std::string cp_data = (root / "cp_sim" / "data.csv").string();

  std::vector<std::pair<std::string, ExperimentConfig>> modes;
  sim.io.output = (root / "sim").string();
  cp_sim.io.output = (root / "cp_sim").string();
  modes.push_back({"simulate", sim});
  modes.push_back({"simulate-changepoint", cp_sim});
  {
    auto c = parse_experiment_config(R"({"mode": "mcmc", "seed": 5, "model": {"preset": "deconv"}, "run": {"iterations": 60}})");
    c.io.input = data;
    c.io.truth = truth;
    modes.push_back({"mcmc", c});
  }
  {
    auto c = parse_experiment_config(
        R"({"mode": "rbpf", "seed": 6, "model": {"preset": "deconv", "h": [-1.5, 0.5, -0.2]}, "run": {"particles": 200, "lag": 3}})");
    c.io.input = data;
    modes.push_back({"rbpf", c});
  }
  {
    auto c = parse_experiment_config(
        R"({"mode": "changepoint", "seed": 7, "model": {"preset": "changepoint"}, "run": {"burn_in": 20, "retained": 20}})");
    c.io.input = cp_data;
    modes.push_back({"changepoint-mcmc", c});
  }
  {
    auto c = parse_experiment_config(
        R"({"mode": "changepoint", "seed": 8, "model": {"preset": "changepoint"}, "run": {"algorithm": "rbpf", "particles": 200, "lag": 10}})");
    c.io.input = cp_data;
    modes.push_back({"changepoint-rbpf", c});
  }
  {
    auto c = parse_experiment_config(
        R"({"mode": "deconv-bench", "seeds": [1, 2], "model": {"preset": "deconv"}, "run": {"iterations": 40, "variants": ["M1", "M2"]}})");
    modes.push_back({"deconv-bench", c});
  }

  for (auto& [name, cfg] : modes) {
    const bool is_sim = cfg.mode == Mode::Simulate;
    const std::string file = is_sim ? "data.csv" : "estimates.csv";
    std::string first;
    bool ok = true;
    for (int rep = 0; rep < 2 && ok; ++rep) {
      ExperimentConfig c = cfg;
      if (!is_sim) c.io.output = (root / (name + "_" + std::to_string(rep))).string();
      const int code = run(c, quiet);
      if (code != 0) {
        ok = false;
        v.require(false, name + " exit code " + std::to_string(code));
        break;
      }
      const std::string bytes = slurp(fs::path(c.io.output) / file);
      if (rep == 0) {
        first = bytes;
      } else {
        ok = !bytes.empty() && bytes == first;
      }
    }
    if (ok) v.require(true, name + " identical");
    else v.require(false, name + " " + file + " differs between runs");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-9)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<void(Verdict&)>> criteria{
      criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
      criterion_6, criterion_7, criterion_8, criterion_9};
  int failures = 0;
  for (int k = 1; k <= 9; ++k) {
    if (only != 0 && k != only) continue;
    Verdict v;
    const auto t0 = Clock::now();
    try {
      criteria[static_cast<std::size_t>(k - 1)](v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    std::printf("criterion %d: %s (%.1f s) %s\n", k, v.pass ? "PASS" : "FAIL", seconds_since(t0),
                v.detail.str().c_str());
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
