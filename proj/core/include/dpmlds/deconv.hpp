#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dpmlds/cluster_process.hpp"
#include "dpmlds/mcmc.hpp"
#include "dpmlds/statespace.hpp"

namespace dpmlds {

/// Bernoulli-Gaussian blind deconvolution: an impulse train v_t (zero with
/// probability 1 - lambda, else drawn from F^v) filtered by (1, h_1..h_L)
/// plus white noise of variance sigma_w2.
struct DeconvGenerator {
  std::size_t horizon = 120;
  VectorXd h = (VectorXd(3) << -1.5, 0.5, -0.2).finished();
  double lambda = 0.4;
  double sigma_w2 = 0.1;
  std::vector<WeightedAtom> fv = {
      {make_atom(GaussianCluster(VectorXd::Constant(1, 2.0), MatrixXd::Constant(1, 1, 0.5))), 0.7},
      {make_atom(GaussianCluster(VectorXd::Constant(1, -1.0), MatrixXd::Constant(1, 1, 0.1))), 0.3}};
};

struct DeconvData {
  Series z;
  std::vector<double> v;  // v_1..v_T
};

DeconvData simulate_deconv(const DeconvGenerator& gen, RngStream& rng);

/// State x_t = (v_t, v_{t-1}, .., v_{t-L}): F shifts down, G = e_1,
/// H = (1 h), x_0 = 0 with zero covariance.
LinearGaussianModel build_deconv_statespace(const VectorXd& h);

struct HPosterior {
  VectorXd mean;
  MatrixXd cov;
};

/// Conditional of h given a state path x_{0:T} (element t is x_t):
/// precision (Sigma_h^{-1} + sum lag lag^T) / sigma_w2, mean Sigma' sum lag (z_t - v_t).
HPosterior h_posterior(const std::vector<VectorXd>& x_path, const Series& z, double sigma_w2,
                       const MatrixXd& sigma_h);
VectorXd sample_h_posterior(const std::vector<VectorXd>& x_path, const Series& z,
                            double sigma_w2, const MatrixXd& sigma_h, RngStream& rng);

struct InverseGammaParams {
  double shape = 0.0;
  double scale = 0.0;
};

/// iG(u + T/2, v + sum (z_t - H x_t)^2 / 2).
InverseGammaParams sigma_w2_posterior(const std::vector<VectorXd>& x_path, const Series& z,
                                      const VectorXd& h, double u, double v);
double sample_sigma_w2_posterior(const std::vector<VectorXd>& x_path, const Series& z,
                                 const VectorXd& h, double u, double v, RngStream& rng);

/// M1: spike-and-DPM with alpha sampled. M2, M3: jump-linear models with a
/// known finite F^v. M4-M7: M1 with alpha fixed at 0.1, 1, 10, 100.
/// M8: M1 with sigma_w2 sampled.
enum class DeconvVariant { M1, M2, M3, M4, M5, M6, M7, M8 };

std::string variant_name(DeconvVariant v);
DeconvVariant parse_variant(const std::string& name);
std::vector<DeconvVariant> all_variants();

struct DeconvPriors {
  NiwParams base = scalar_niw(0.0, 0.1, 4.0, 1.0);
  AlphaPrior alpha_prior{3.0, 3.0};
  double alpha_init = 100.0;
  double zeta = 1.0;
  double tau = 1.0;
  double sigma_h = 100.0;  // Sigma_h = sigma_h * I
  double sigma_w2 = 0.1;   // known value, or the initial value for M8
  double ig_u = 2.0;
  double ig_v = 0.1;
  double lambda = 0.4;     // nonzero probability of the jump-linear variants
  std::size_t filter_length = 3;
  // Collapsed Metropolis-Hastings moves on h per sweep (x integrated out),
  // each a scale move then a random-walk move. 0 leaves only the conjugate draw.
  std::size_t h_collapsed_moves = 0;
  double h_scale_step = 0.3;
  double h_rw_step = 0.1;
};

struct DeconvRunConfig {
  DeconvVariant variant = DeconvVariant::M1;
  DeconvPriors priors;
  std::size_t burn_in = 1875;
  std::size_t retained = 625;
  std::uint64_t seed = 0;
  bool keep_occupancy = true;
  VectorXd initial_h;  // empty: start the chain at h = 0
};

struct DeconvResult {
  std::vector<double> v_mmse;          // v^MMSE_{t|T}, t = 1..T
  std::vector<double> v_var;           // posterior variance of v_t
  double e_mse = 0.0;                  // NaN without ground truth
  std::vector<VectorXd> h_trace;       // every iteration
  std::vector<double> sigma_w2_trace;  // every iteration
  std::vector<double> alpha_trace;     // every iteration (NaN for M2, M3)
  ChainTrace trace;
};

/// The v-side cluster process of a variant.
std::unique_ptr<ClusterProcess> deconv_v_process(DeconvVariant variant, const DeconvPriors& p);

DeconvResult run_deconv(const Series& z, const std::vector<double>* v_true,
                        const DeconvRunConfig& config);

/// sqrt(mean((truth - estimate)^2)).
double e_mse(const std::vector<double>& truth, const std::vector<double>& estimate);

struct DeconvBenchConfig {
  DeconvGenerator generator;
  DeconvPriors priors;
  std::vector<DeconvVariant> variants = all_variants();
  std::vector<std::uint64_t> seeds;
  std::size_t burn_in = 1875;
  std::size_t retained = 625;
};

struct DeconvBenchRow {
  DeconvVariant variant = DeconvVariant::M1;
  std::vector<double> e_mse;  // per seed
  double mean = 0.0;
  double stddev = 0.0;
  double median = 0.0;
};

/// One data set per seed shared by every variant. `on_run` sees each run's
/// full result.
std::vector<DeconvBenchRow> run_deconv_benchmark(
    const DeconvBenchConfig& config,
    const std::function<void(DeconvVariant, std::uint64_t, const DeconvResult&)>& on_run = {});

}  // namespace dpmlds
