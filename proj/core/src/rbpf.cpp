#include "dpmlds/rbpf.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "dpmlds/errors.hpp"

namespace dpmlds {

namespace {

constexpr std::uint64_t kResampleKey = 0xFFFFFFFFull;

std::uint64_t step_key(std::size_t t, std::uint64_t i) {
  return (static_cast<std::uint64_t>(t) << 32) | i;
}

StateEstimate mixture_moments(std::span<const double> weights,
                              const std::vector<const VectorXd*>& means,
                              const std::vector<const MatrixXd*>& covs) {
  const Index n = means.front()->size();
  StateEstimate out{VectorXd::Zero(n), MatrixXd::Zero(n, n)};
  for (std::size_t i = 0; i < weights.size(); ++i) out.mean += weights[i] * *means[i];
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const VectorXd d = *means[i] - out.mean;
    out.cov += weights[i] * (*covs[i] + d * d.transpose());
  }
  out.cov = symmetrize(out.cov);
  return out;
}

}  // namespace

Particle::Particle(const Particle& other)
    : v(other.v ? other.v->clone() : nullptr),
      w(other.w ? other.w->clone() : nullptr),
      belief(other.belief),
      log_weight(other.log_weight),
      window(other.window) {}

Particle& Particle::operator=(const Particle& other) {
  if (this != &other) {
    Particle copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void RbpfConfig::validate() const {
  if (particles < 2) throw ConfigError("particle count N must be >= 2");
  if (ess_threshold >= 0.0 &&
      (ess_threshold < 1.0 || ess_threshold > static_cast<double>(particles))) {
    throw ConfigError("ess_threshold must lie in [1, N]");
  }
}

double RbpfConfig::threshold() const {
  return ess_threshold < 0.0 ? 0.5 * static_cast<double>(particles) : ess_threshold;
}

std::vector<double> ParticleEnsemble::weights() const {
  std::vector<double> w(particles.size());
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& p : particles) top = std::max(top, p.log_weight);
  double total = 0.0;
  for (std::size_t i = 0; i < particles.size(); ++i) {
    w[i] = std::exp(particles[i].log_weight - top);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

void ParticleEnsemble::normalize() {
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& p : particles) top = std::max(top, p.log_weight);
  if (!std::isfinite(top)) throw DegeneracyError("all particle weights are zero", t);
  double total = 0.0;
  for (const auto& p : particles) total += std::exp(p.log_weight - top);
  const double lse = top + std::log(total);
  for (auto& p : particles) p.log_weight -= lse;
}

ParticleEnsemble rbpf_init(const LinearGaussianModel& model, const RbpfConfig& config,
                           const ClusterProcess& v_prior, const ClusterProcess& w_prior,
                           RngStream& rng) {
  config.validate();
  ParticleEnsemble e;
  e.ess_threshold = config.threshold();
  e.lag = config.lag;
  e.particles.resize(config.particles);
  const double lw = -std::log(static_cast<double>(config.particles));
  for (auto& p : e.particles) {
    p.v = v_prior.clone();
    p.w = w_prior.clone();
    p.belief = config.init_belief ? config.init_belief(rng) : KalmanBelief::prior(model);
    p.log_weight = lw;
  }
  return e;
}

StepReport rbpf_step(ParticleEnsemble& ensemble, const LinearGaussianModel& model,
                     std::size_t t, const VectorXd& z, const RngStream& rng) {
  if (t != ensemble.t + 1) throw ConfigError("rbpf_step called out of order");
  ensemble.t = t;
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    Particle& p = ensemble.particles[i];
    RngStream r = rng.derive(step_key(t, i));
    AtomPtr a = p.v->draw(r);
    p.v->add(a);
    AtomPtr b = p.w->draw(r);
    p.w->add(b);
    p.belief = kalman_step(model, t, p.belief, *a, *b, z);
    p.log_weight += p.belief.loglik_increment;
    if (std::isnan(p.log_weight)) p.log_weight = -std::numeric_limits<double>::infinity();
    p.window.push_back({std::move(a), std::move(b), p.belief});
    while (p.window.size() > ensemble.lag + 1) p.window.pop_front();
  }
  ensemble.normalize();
  const auto w = ensemble.weights();
  StepReport report;
  report.ess = ess(w);
  if (report.ess <= ensemble.ess_threshold) {
    RngStream r = rng.derive(step_key(t, kResampleKey));
    resample_systematic(ensemble, r);
    report.resampled = true;
  }
  return report;
}

double ess(std::span<const double> weights) {
  double s = 0.0;
  for (double w : weights) s += w * w;
  return 1.0 / s;
}

std::vector<std::size_t> systematic_counts(std::span<const double> weights, double u) {
  const std::size_t n = weights.size();
  std::vector<std::size_t> counts(n, 0);
  if (n == 0) return counts;
  double cum = 0.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cum += weights[i] * static_cast<double>(n);
    while (j < n && static_cast<double>(j) + u < cum) {
      ++counts[i];
      ++j;
    }
  }
  // Rounding can leave the cumulative sum a hair below n.
  if (j < n) counts[n - 1] += n - j;
  return counts;
}

void resample_systematic(ParticleEnsemble& ensemble, RngStream& rng) {
  const auto w = ensemble.weights();
  const auto counts = systematic_counts(w, rng.uniform());
  const std::size_t n = ensemble.size();
  const double lw = -std::log(static_cast<double>(n));
  std::vector<Particle> next;
  next.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < counts[i]; ++c) {
      next.push_back(ensemble.particles[i]);
      next.back().log_weight = lw;
    }
  }
  ensemble.particles = std::move(next);
}

StateEstimate estimate_state(const ParticleEnsemble& ensemble) {
  const auto w = ensemble.weights();
  std::vector<const VectorXd*> means;
  std::vector<const MatrixXd*> covs;
  for (const auto& p : ensemble.particles) {
    means.push_back(&p.belief.mean);
    covs.push_back(&p.belief.cov);
  }
  return mixture_moments(w, means, covs);
}

StateEstimate fixed_lag_estimate(const ParticleEnsemble& ensemble,
                                 const LinearGaussianModel& model, std::size_t lag) {
  if (lag == 0) return estimate_state(ensemble);
  const auto w = ensemble.weights();
  std::vector<SmoothedMoment> picked;
  picked.reserve(ensemble.size());
  for (const auto& p : ensemble.particles) {
    const std::size_t n = p.window.size();
    if (n < lag + 1) throw ConfigError("insufficient history for the requested lag");
    std::vector<KalmanBelief> beliefs;
    beliefs.reserve(lag + 1);
    for (std::size_t k = n - lag - 1; k < n; ++k) beliefs.push_back(p.window[k].belief);
    const auto sm = rts_smooth(model, beliefs, ensemble.t - lag);
    picked.push_back(sm.front());
  }
  std::vector<const VectorXd*> means;
  std::vector<const MatrixXd*> covs;
  for (const auto& s : picked) {
    means.push_back(&s.mean);
    covs.push_back(&s.cov);
  }
  return mixture_moments(w, means, covs);
}

double jump_probability(const ParticleEnsemble& ensemble, std::size_t lag) {
  const auto w = ensemble.weights();
  double mass = 0.0;
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    const auto& p = ensemble.particles[i];
    if (p.window.size() < lag + 1) throw ConfigError("insufficient history for the requested lag");
    const auto& rec = p.window[p.window.size() - 1 - lag];
    if (!p.v->is_spike(rec.v)) mass += w[i];
  }
  return std::min(1.0, mass);
}

double mean_distinct_v(const ParticleEnsemble& ensemble) {
  const auto w = ensemble.weights();
  double m = 0.0;
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    m += w[i] * static_cast<double>(ensemble.particles[i].v->summary().distinct);
  }
  return m;
}

RbpfRun run_rbpf(const LinearGaussianModel& model, const Series& z,
                 const ClusterProcess& v_prior, const ClusterProcess& w_prior,
                 const RbpfConfig& config) {
  const std::size_t horizon = z.size();
  if (horizon == 0) throw DataError("observation series is empty");
  model.validate(horizon);
  RngStream init_rng(config.seed, 1);
  const RngStream step_rng(config.seed, 0);
  ParticleEnsemble ens = rbpf_init(model, config, v_prior, w_prior, init_rng);

  RbpfRun run;
  run.steps.reserve(horizon);
  run.smoothed.resize(horizon);
  run.jump_prob.assign(horizon, 0.0);
  const std::size_t lag = config.lag;
  for (std::size_t t = 1; t <= horizon; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const StepReport rep = rbpf_step(ens, model, t, z[t - 1], step_rng);
    RbpfRecord rec;
    rec.t = t;
    rec.filtered = estimate_state(ens);
    rec.ess = rep.ess;
    rec.resampled = rep.resampled;
    rec.mean_distinct_v = mean_distinct_v(ens);
    if (t > lag) {
      run.smoothed[t - lag - 1] = fixed_lag_estimate(ens, model, lag);
      run.jump_prob[t - lag - 1] = jump_probability(ens, lag);
    }
    rec.step_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    run.steps.push_back(std::move(rec));
  }
  const std::size_t first_pending = horizon > lag ? horizon - lag + 1 : 1;
  for (std::size_t s = first_pending; s <= horizon; ++s) {
    run.smoothed[s - 1] = fixed_lag_estimate(ens, model, horizon - s);
    run.jump_prob[s - 1] = jump_probability(ens, horizon - s);
  }
  return run;
}

}  // namespace dpmlds
