#include "dpmlds/changepoint.hpp"

#include <algorithm>
#include <cmath>

#include "dpmlds/errors.hpp"

namespace dpmlds {

namespace {

MatrixXd trend_matrix() { return (MatrixXd(2, 2) << 1.0, 1.0, 0.0, 1.0).finished(); }

AtomPtr scalar_atom(double mean, double var) {
  return make_atom(GaussianCluster(VectorXd::Constant(1, mean), MatrixXd::Constant(1, 1, var)));
}

}  // namespace

void ChangePointPriors::validate() const {
  if (!(lambda_w > 0.0 && lambda_w < 1.0) || !(lambda_v > 0.0 && lambda_v < 1.0)) {
    throw ConfigError("lambda_w and lambda_v must lie in (0, 1)");
  }
  if (!(sigma1_w > 0.0) || !(sigma2_w > 0.0)) {
    throw ConfigError("observation-noise variances must be positive");
  }
  if (!(level_var >= 0.0) || !(slope_var >= 0.0)) {
    throw ConfigError("initial state variances must be >= 0");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (base.dim() != 2) throw ConfigError("change-point base measure must be 2-dimensional");
  base.validate();
}

LinearGaussianModel build_changepoint_statespace(const VectorXd& init_mean,
                                                 const MatrixXd& init_cov) {
  return LinearGaussianModel(trend_matrix(), trend_matrix(),
                             (MatrixXd(1, 2) << 1.0, 0.0).finished(), init_mean, init_cov);
}

LinearGaussianModel changepoint_model_for(const Series& z, const ChangePointPriors& p) {
  if (z.empty()) throw DataError("observation series is empty");
  for (const auto& zt : z) {
    if (zt.size() != 1) throw DataError("change-point model expects scalar observations");
  }
  VectorXd mean(2);
  mean << z.front()(0), 0.0;
  MatrixXd cov = MatrixXd::Zero(2, 2);
  cov(0, 0) = p.level_var;
  cov(1, 1) = p.slope_var;
  return build_changepoint_statespace(mean, cov);
}

std::unique_ptr<ClusterProcess> changepoint_v_process(const ChangePointPriors& p) {
  p.validate();
  HyperSampling sampling;
  sampling.alpha_prior = p.alpha_prior;
  return std::make_unique<SpikeDpmProcess>(DpHyper{p.alpha, BaseMeasure(p.base)},
                                           SpikeWeight::fixed(p.lambda_v), sampling);
}

std::unique_ptr<ClusterProcess> changepoint_w_process(const ChangePointPriors& p) {
  p.validate();
  return std::make_unique<FiniteMixtureProcess>(
      std::vector<WeightedAtom>{{scalar_atom(0.0, p.sigma1_w), p.lambda_w},
                                {scalar_atom(0.0, p.sigma2_w), 1.0 - p.lambda_w}});
}

ChangePointData synth_changepoint_data(const ChangePointSynth& c, RngStream& rng) {
  if (!(c.jump_prob >= 0.0 && c.jump_prob <= 1.0) || !(c.lambda_w >= 0.0 && c.lambda_w <= 1.0)) {
    throw ConfigError("probabilities must lie in [0, 1]");
  }
  if (!(c.sigma1_w > 0.0) || !(c.sigma2_w > 0.0)) {
    throw ConfigError("observation-noise variances must be positive");
  }
  for (std::size_t j : c.forced_jumps) {
    if (j < 1 || j > c.horizon) throw ConfigError("forced jump time outside 1..T");
  }
  ChangePointData d;
  double m = c.level0;
  double s = c.slope0;
  for (std::size_t t = 1; t <= c.horizon; ++t) {
    m += s;
    const bool forced = std::find(c.forced_jumps.begin(), c.forced_jumps.end(), t) !=
                        c.forced_jumps.end();
    const bool random = rng.bernoulli(c.jump_prob);
    if (forced || random) {
      const double size = c.jump_size * (1.0 + 0.5 * rng.uniform());
      m += rng.bernoulli(0.5) ? size : -size;
      d.jump_times.push_back(t);
    }
    const bool correct = rng.bernoulli(c.lambda_w);
    const double sd = std::sqrt(correct ? c.sigma1_w : c.sigma2_w);
    if (!correct) d.outlier_times.push_back(t);
    d.level.push_back(m);
    d.slope.push_back(s);
    d.z.push_back(VectorXd::Constant(1, m + sd * rng.normal()));
  }
  return d;
}

ChainTrace run_changepoint_mcmc(const Series& z, const ChangePointPriors& p,
                                const ChainConfig& config) {
  const auto model = changepoint_model_for(z, p);
  return run_chain(model, z, *changepoint_v_process(p), *changepoint_w_process(p), config);
}

RbpfRun run_changepoint_rbpf(const Series& z, const ChangePointPriors& p,
                             const RbpfConfig& config) {
  const auto model = changepoint_model_for(z, p);
  return run_rbpf(model, z, *changepoint_v_process(p), *changepoint_w_process(p), config);
}

std::vector<double> jump_posterior(const ChainTrace& trace) { return trace.v_nonspike_freq; }

std::vector<double> jump_posterior(const RbpfRun& run) { return run.jump_prob; }

DetectionSummary evaluate_detection(const std::vector<double>& prob,
                                    const std::vector<std::size_t>& jump_times,
                                    double threshold) {
  DetectionSummary s;
  for (std::size_t j : jump_times) {
    if (j < 1 || j > prob.size()) throw ConfigError("jump time outside 1..T");
    const bool hit = prob[j - 1] > threshold;
    s.detected.push_back(hit);
    s.hits += hit ? 1 : 0;
  }
  std::size_t others = 0;
  for (std::size_t t = 1; t <= prob.size(); ++t) {
    if (std::find(jump_times.begin(), jump_times.end(), t) != jump_times.end()) continue;
    ++others;
    if (prob[t - 1] > threshold) ++s.false_alarms;
  }
  s.false_alarm_rate = others ? static_cast<double>(s.false_alarms) / static_cast<double>(others) : 0.0;
  return s;
}

}  // namespace dpmlds
