#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dpmlds/cluster_process.hpp"
#include "dpmlds/rng.hpp"
#include "dpmlds/statespace.hpp"

namespace dpmlds {

/// Current cluster path and the two noise-side processes holding every index
/// of that path.
struct ChainState {
  ThetaPath theta;
  std::unique_ptr<ClusterProcess> v;
  std::unique_ptr<ClusterProcess> w;

  ChainState() = default;
  ChainState(const ChainState& other);
  ChainState& operator=(const ChainState& other);
  ChainState(ChainState&&) noexcept = default;
  ChainState& operator=(ChainState&&) noexcept = default;
};

/// theta_{1:T} drawn sequentially from the processes' own urns.
ChainState initialize_chain(const ClusterProcess& v_prior, const ClusterProcess& w_prior,
                            std::size_t horizon, RngStream& rng);

struct SweepOptions {
  /// Propose theta_t^v and theta_t^w together under one acceptance ratio.
  /// When false the two sides are updated one after the other.
  bool joint_update = true;
};

struct SweepStats {
  std::vector<std::uint32_t> proposed;  // per t (index t-1)
  std::vector<std::uint32_t> accepted;
};

/// Forward quantities for a candidate theta_t at one site.
struct SiteEval {
  KalmanBelief belief;
  double log_target = 0.0;  // combined_loglik_at
};

SiteEval evaluate_site(const LinearGaussianModel& model, std::size_t t,
                       const KalmanBelief& prev, const BackwardInfo& future,
                       const GaussianCluster& v, const GaussianCluster& w,
                       const VectorXd& z);

/// Metropolis-Hastings acceptance probability min(1, exp(candidate - current)).
double mh_acceptance(double current_log_target, double candidate_log_target);

struct SiteOutcome {
  AtomPtr v;
  AtomPtr w;
  double prob = 0.0;
};

/// Exact law of theta_t after the sweep's update at site t. `v_rest` and
/// `w_rest` hold every index except t; both must have finite
/// predictive_support(). Used to build exact transition matrices.
std::vector<SiteOutcome> site_transition(const LinearGaussianModel& model, std::size_t t,
                                         const KalmanBelief& prev, const BackwardInfo& future,
                                         const VectorXd& z, const ClusterProcess& v_rest,
                                         const ClusterProcess& w_rest, const AtomPtr& current_v,
                                         const AtomPtr& current_w,
                                         const SweepOptions& options = {});

/// One forward sweep over t = 1..T. The backward information cache is built
/// once under the incoming path; at each t the site's index is removed from
/// both processes, the value is updated (urn-proposal MH for continuous
/// sides, exact enumeration for gibbs_enumerable sides) and added back.
/// Throws NumericalError naming t on a numerical failure.
SweepStats gibbs_sweep(const LinearGaussianModel& model, const Series& z, ChainState& state,
                       RngStream& rng, const SweepOptions& options = {});

/// Resample the hyperparameters flagged in each side's process.
void sample_hyperparameters(ChainState& state, RngStream& rng);

/// Extra Gibbs blocks run after every sweep (filter coefficients, noise
/// variances). The model may be modified in place.
class ChainExtension {
 public:
  virtual ~ChainExtension() = default;
  virtual void after_sweep(LinearGaussianModel& model, const Series& z, ChainState& state,
                           RngStream& rng) = 0;
  /// Scalar-vector summaries recorded into the trace for each iteration.
  virtual std::map<std::string, std::vector<double>> record() const { return {}; }
};

struct ChainConfig {
  std::size_t burn_in = 0;    // N'
  std::size_t retained = 1;   // N
  std::uint64_t seed = 0;
  SweepOptions sweep;
  bool sample_hyper = true;
  /// Keep per-retained-iteration smoothed means in the trace.
  bool keep_smoothed_means = true;
  /// Keep per-retained-iteration non-spike occupancy of the v side.
  bool keep_occupancy = true;

  void validate() const;
};

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based; iteration 1 is the initial state
  ProcessSummary v;
  ProcessSummary w;
  double acceptance_rate = 0.0;  // over the sweep that produced this state
  std::map<std::string, std::vector<double>> extra;
};

/// Distinct v-side clusters with counts at one retained iteration together
/// with the DP parameters in force.
struct UrnSnapshot {
  std::vector<WeightedAtom> atoms;  // weight = count
  double alpha = 0.0;
  std::shared_ptr<const NiwParams> base;  // null when the base is not NIW
  std::size_t assigned = 0;
};

struct ChainTrace {
  std::size_t burn_in = 0;
  std::size_t retained = 0;
  std::vector<IterationRecord> iterations;  // every iteration 1..N'+N
  std::vector<std::vector<VectorXd>> smoothed_means;  // [retained i][t = 0..T]
  std::vector<VectorXd> mmse_mean;   // x^MMSE_{t|T}, t = 0..T
  std::vector<MatrixXd> mmse_cov;    // mixture covariance
  std::vector<VectorXd> theta_v_mean;  // posterior mean of the v-cluster mean, t = 1..T
  std::vector<double> v_nonspike_freq; // fraction of retained iterations with a non-spike v at t
  std::vector<std::uint64_t> proposed;   // per t, summed over all sweeps
  std::vector<std::uint64_t> accepted;
  std::vector<UrnSnapshot> urns;        // per retained iteration
  std::vector<ThetaPath> theta_samples; // per retained iteration (when keep_occupancy)

  double acceptance_rate(std::size_t t) const;
};

/// Iterations 1..N'+N: iteration 1 is `state` as given, each later iteration
/// is a sweep, hyperparameter update and extension update. Retained
/// iterations N'+1..N'+N are smoothed under their cluster path and averaged.
ChainTrace run_chain(LinearGaussianModel model, const Series& z, ChainState state,
                     const ChainConfig& config, ChainExtension* extension = nullptr);

/// Initializes from the processes' urns with a stream derived from the seed,
/// then runs the chain.
ChainTrace run_chain(const LinearGaussianModel& model, const Series& z,
                     const ClusterProcess& v_prior, const ClusterProcess& w_prior,
                     const ChainConfig& config, ChainExtension* extension = nullptr);

}  // namespace dpmlds
