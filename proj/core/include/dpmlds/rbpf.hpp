#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dpmlds/cluster_process.hpp"
#include "dpmlds/rng.hpp"
#include "dpmlds/statespace.hpp"

namespace dpmlds {

/// One time step of a particle's history kept for fixed-lag smoothing.
struct LagRecord {
  AtomPtr v;
  AtomPtr w;
  KalmanBelief belief;
};

/// A cluster path summarized by its own urn state, the Kalman belief given
/// that path, and an unnormalized log weight.
struct Particle {
  std::unique_ptr<ClusterProcess> v;
  std::unique_ptr<ClusterProcess> w;
  KalmanBelief belief;
  double log_weight = 0.0;
  std::deque<LagRecord> window;  // most recent last, at most lag + 1 entries

  Particle() = default;
  Particle(const Particle& other);
  Particle& operator=(const Particle& other);
  Particle(Particle&&) noexcept = default;
  Particle& operator=(Particle&&) noexcept = default;
};

struct RbpfConfig {
  std::size_t particles = 1000;
  /// Resample when N_eff <= ess_threshold; a negative value means N / 2.
  double ess_threshold = -1.0;
  std::size_t lag = 0;
  std::uint64_t seed = 0;
  /// Optional draw of each particle's initial belief; the state prior is
  /// used for every particle when unset.
  std::function<KalmanBelief(RngStream&)> init_belief;

  void validate() const;
  double threshold() const;
};

class ParticleEnsemble {
 public:
  std::vector<Particle> particles;
  std::size_t t = 0;
  double ess_threshold = 0.0;
  std::size_t lag = 0;

  std::size_t size() const noexcept { return particles.size(); }
  /// Normalized weights.
  std::vector<double> weights() const;
  /// Subtract the log-sum-exp so that the stored weights are normalized.
  void normalize();
};

ParticleEnsemble rbpf_init(const LinearGaussianModel& model, const RbpfConfig& config,
                           const ClusterProcess& v_prior, const ClusterProcess& w_prior,
                           RngStream& rng);

struct StepReport {
  double ess = 0.0;
  bool resampled = false;
};

/// Advance every particle by one step: draw theta_t from the particle's own
/// urn, Kalman step, multiply the weight by the predictive likelihood,
/// normalize, and resample systematically when N_eff <= threshold. Particle
/// i draws from rng.derive((t << 32) | i). Throws DegeneracyError naming t
/// when every weight vanishes.
StepReport rbpf_step(ParticleEnsemble& ensemble, const LinearGaussianModel& model,
                     std::size_t t, const VectorXd& z, const RngStream& rng);

/// [sum w_i^2]^{-1} for normalized weights.
double ess(std::span<const double> weights);

/// Offspring counts of systematic resampling with offset u in [0, 1).
std::vector<std::size_t> systematic_counts(std::span<const double> weights, double u);

/// Replace the ensemble by N systematic-resampled deep copies with uniform
/// weights.
void resample_systematic(ParticleEnsemble& ensemble, RngStream& rng);

struct StateEstimate {
  VectorXd mean;
  MatrixXd cov;
};

/// Weighted mixture mean and covariance of the particles' filtered beliefs.
StateEstimate estimate_state(const ParticleEnsemble& ensemble);

/// E(x_{t-lag} | z_{1:t}) and its mixture covariance, from a RTS pass over
/// each particle's stored window. Throws ConfigError when fewer than lag + 1
/// steps are stored.
StateEstimate fixed_lag_estimate(const ParticleEnsemble& ensemble,
                                 const LinearGaussianModel& model, std::size_t lag);

/// Weight mass of particles whose v-cluster at time t - lag is not the spike.
double jump_probability(const ParticleEnsemble& ensemble, std::size_t lag);

/// Weighted mean number of distinct v clusters across particles.
double mean_distinct_v(const ParticleEnsemble& ensemble);

struct RbpfRecord {
  std::size_t t = 0;
  StateEstimate filtered;
  double ess = 0.0;
  bool resampled = false;
  double mean_distinct_v = 0.0;
  double step_seconds = 0.0;
};

struct RbpfRun {
  std::vector<RbpfRecord> steps;        // t = 1..T
  std::vector<StateEstimate> smoothed;  // t = 1..T, E(x_t | z_{1:min(t+lag,T)})
  std::vector<double> jump_prob;        // t = 1..T, at the same lag
};

/// Filter z_{1:T}. With lag > 0 the estimate for time t is emitted at
/// t + lag, and the last lag times are emitted at T with shorter lags.
RbpfRun run_rbpf(const LinearGaussianModel& model, const Series& z,
                 const ClusterProcess& v_prior, const ClusterProcess& w_prior,
                 const RbpfConfig& config);

}  // namespace dpmlds
