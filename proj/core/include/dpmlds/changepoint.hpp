#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "dpmlds/cluster_process.hpp"
#include "dpmlds/mcmc.hpp"
#include "dpmlds/rbpf.hpp"
#include "dpmlds/statespace.hpp"

namespace dpmlds {

/// Local linear trend x_t = (m_t, m'_t) with spike-and-DPM state noise and a
/// two-component observation noise (correct measurement / outlier).
struct ChangePointPriors {
  double lambda_w = 0.98;  // probability that a measurement is correct
  double sigma1_w = 1e-7;  // its variance
  double sigma2_w = 1.0;   // outlier variance
  double lambda_v = 0.15;  // probability of a jump
  NiwParams base{VectorXd::Zero(2), 1e6, 4.0, 0.5e-6 * MatrixXd::Identity(2, 2)};
  double alpha = 1.0;
  std::optional<AlphaPrior> alpha_prior;  // alpha sampled when set
  double level_var = 1e-6;  // prior variance of m_0 around z_1
  double slope_var = 1e-8;  // prior variance of m'_0 around 0
  double threshold = 0.5;

  void validate() const;
};

/// F = G = [[1, 1], [0, 1]], H = [1, 0].
LinearGaussianModel build_changepoint_statespace(
    const VectorXd& init_mean = VectorXd::Zero(2),
    const MatrixXd& init_cov = MatrixXd::Identity(2, 2));

/// The state space with x_0 ~ N((z_1, 0), diag(level_var, slope_var)).
LinearGaussianModel changepoint_model_for(const Series& z, const ChangePointPriors& p);

std::unique_ptr<ClusterProcess> changepoint_v_process(const ChangePointPriors& p);
std::unique_ptr<ClusterProcess> changepoint_w_process(const ChangePointPriors& p);

struct ChangePointSynth {
  std::size_t horizon = 120;
  double level0 = 0.01;
  double slope0 = 0.0;
  double jump_prob = 0.0;  // random jumps per step
  std::vector<std::size_t> forced_jumps = {8, 20, 110};
  double jump_size = 3e-3;  // level jump magnitude, scaled by U(1, 1.5) with a random sign
  double lambda_w = 0.98;
  double sigma1_w = 1e-7;
  double sigma2_w = 1.0;
};

struct ChangePointData {
  Series z;
  std::vector<double> level;   // m_1..m_T
  std::vector<double> slope;
  std::vector<std::size_t> jump_times;
  std::vector<std::size_t> outlier_times;
};

ChangePointData synth_changepoint_data(const ChangePointSynth& config, RngStream& rng);

ChainTrace run_changepoint_mcmc(const Series& z, const ChangePointPriors& p,
                                const ChainConfig& config);
RbpfRun run_changepoint_rbpf(const Series& z, const ChangePointPriors& p,
                             const RbpfConfig& config);

/// Per-t probability that theta_t^v is not the spike.
std::vector<double> jump_posterior(const ChainTrace& trace);
std::vector<double> jump_posterior(const RbpfRun& run);

struct DetectionSummary {
  std::vector<bool> detected;     // per true jump
  std::size_t hits = 0;
  std::size_t false_alarms = 0;   // non-jump times above threshold
  double false_alarm_rate = 0.0;  // over non-jump times
};

DetectionSummary evaluate_detection(const std::vector<double>& prob,
                                    const std::vector<std::size_t>& jump_times,
                                    double threshold);

}  // namespace dpmlds
