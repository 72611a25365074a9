#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "dpmlds/dpm.hpp"
#include "dpmlds/gaussian.hpp"
#include "dpmlds/rng.hpp"

namespace dpmlds {

/// Which hyperparameters of a DP side are resampled after each sweep.
struct HyperSampling {
  std::optional<AlphaPrior> alpha_prior;     // alpha sampled when set
  std::shared_ptr<const PsiPrior> psi_prior; // psi sampled when non-null
  /// Step of the log-scale random walk that follows the prior-proposal
  /// alpha update.
  double alpha_rw_step = 0.7;
};

struct ProcessSummary {
  double alpha = 0.0;            // NaN for processes without a concentration
  std::size_t distinct = 0;      // distinct non-spike clusters in use
  std::size_t assigned = 0;      // indices assigned to non-spike clusters
  std::size_t spikes = 0;        // indices assigned to the spike
};

/// Prior law of one noise side's cluster sequence, together with the
/// bookkeeping needed to evaluate its one-step predictive. The MCMC sampler
/// removes index t, draws from the predictive of the remaining indices and
/// adds the accepted value back; the particle filter only draws and adds.
class ClusterProcess {
 public:
  virtual ~ClusterProcess() = default;

  virtual std::unique_ptr<ClusterProcess> clone() const = 0;
  virtual Index dim() const = 0;

  /// Draw from the predictive given the current contents.
  virtual AtomPtr draw(RngStream& rng) const = 0;

  /// The predictive as an explicit finite mixture when its support is
  /// finite; nullopt otherwise.
  virtual std::optional<std::vector<WeightedAtom>> predictive_support() const {
    return std::nullopt;
  }

  /// True when the sweep should draw this side from its exact conditional by
  /// enumerating predictive_support() instead of a Metropolis-Hastings step.
  virtual bool gibbs_enumerable() const { return false; }

  virtual void add(const AtomPtr& atom) = 0;
  virtual void remove(const AtomPtr& atom) = 0;

  virtual bool is_spike(const AtomPtr& /*atom*/) const { return false; }

  /// Resample flagged hyperparameters from their conditionals.
  virtual void update_hyper(RngStream& /*rng*/) {}

  virtual ProcessSummary summary() const = 0;

  /// DP state for posterior predictive density estimation; null for
  /// processes without a DP component.
  virtual const ClusterRegistry* registry() const { return nullptr; }
  virtual const DpHyper* dp_hyper() const { return nullptr; }
};

/// theta_t ~ DP(G0, alpha), integrated out through the Polya urn.
class DpmProcess final : public ClusterProcess {
 public:
  explicit DpmProcess(DpHyper hyper, HyperSampling sampling = {});

  std::unique_ptr<ClusterProcess> clone() const override;
  Index dim() const override { return hyper_.base.dim(); }
  AtomPtr draw(RngStream& rng) const override;
  std::optional<std::vector<WeightedAtom>> predictive_support() const override;
  void add(const AtomPtr& atom) override { registry_.add(atom); }
  void remove(const AtomPtr& atom) override { registry_.remove(atom); }
  void update_hyper(RngStream& rng) override;
  ProcessSummary summary() const override;
  const ClusterRegistry* registry() const override { return &registry_; }
  const DpHyper* dp_hyper() const override { return &hyper_; }

  void set_alpha(double alpha);
  const HyperSampling& sampling() const noexcept { return sampling_; }

 private:
  DpHyper hyper_;
  HyperSampling sampling_;
  ClusterRegistry registry_;
};

/// Probability that an index is assigned to the DPM rather than the spike:
/// either fixed, or lambda ~ Beta(zeta, tau) integrated out.
struct SpikeWeight {
  std::optional<double> fixed_lambda;
  double zeta = 1.0;
  double tau = 1.0;

  static SpikeWeight fixed(double lambda) { return {lambda, 1.0, 1.0}; }
  static SpikeWeight beta(double zeta, double tau) { return {std::nullopt, zeta, tau}; }
};

/// Branch weights of the spike-and-DPM predictive. spike + dpm = 1, and the
/// DPM branch splits into existing atoms and a fresh G0 draw:
/// dpm * urn.existing[k].weight and dpm * urn.fresh.
struct SpikeUrnWeights {
  double spike = 0.0;
  double dpm = 0.0;
  UrnPredictive urn;
};

/// theta_t = spike atom with probability 1 - lambda, otherwise a DP draw.
/// The spike is a zero-covariance atom at the origin.
class SpikeDpmProcess final : public ClusterProcess {
 public:
  SpikeDpmProcess(DpHyper hyper, SpikeWeight weight, HyperSampling sampling = {});

  std::unique_ptr<ClusterProcess> clone() const override;
  Index dim() const override { return hyper_.base.dim(); }
  AtomPtr draw(RngStream& rng) const override;
  std::optional<std::vector<WeightedAtom>> predictive_support() const override;
  void add(const AtomPtr& atom) override;
  void remove(const AtomPtr& atom) override;
  bool is_spike(const AtomPtr& atom) const override { return atom == spike_; }
  void update_hyper(RngStream& rng) override;
  ProcessSummary summary() const override;
  const ClusterRegistry* registry() const override { return &registry_; }
  const DpHyper* dp_hyper() const override { return &hyper_; }

  SpikeUrnWeights weights() const;
  const AtomPtr& spike() const noexcept { return spike_; }
  std::size_t spike_count() const noexcept { return spikes_; }
  void set_alpha(double alpha);

 private:
  DpHyper hyper_;
  SpikeWeight weight_;
  HyperSampling sampling_;
  AtomPtr spike_;
  ClusterRegistry registry_;
  std::size_t spikes_ = 0;
};

/// Spike-and-DPM predictive for index `exclude` of a full assignment
/// sequence; spike indices are recognized by pointer equality with `spike`.
SpikeUrnWeights spike_urn_conditional(std::span<const AtomPtr> assignments,
                                      std::size_t exclude, const AtomPtr& spike,
                                      double alpha, const SpikeWeight& weight);

/// theta_t i.i.d. from a known finite mixture of Gaussian atoms.
class FiniteMixtureProcess final : public ClusterProcess {
 public:
  /// `spike_index` marks the component reported by is_spike (if any).
  explicit FiniteMixtureProcess(std::vector<WeightedAtom> components,
                                std::optional<std::size_t> spike_index = std::nullopt);

  std::unique_ptr<ClusterProcess> clone() const override;
  Index dim() const override { return components_.front().atom->dim(); }
  AtomPtr draw(RngStream& rng) const override;
  std::optional<std::vector<WeightedAtom>> predictive_support() const override {
    return components_;
  }
  bool gibbs_enumerable() const override { return true; }
  void add(const AtomPtr& atom) override;
  void remove(const AtomPtr& atom) override;
  bool is_spike(const AtomPtr& atom) const override;
  ProcessSummary summary() const override;

  const std::vector<WeightedAtom>& components() const noexcept { return components_; }
  /// Replace the component atoms (weights kept); index k of the result maps
  /// old atom k to new atom k.
  void replace_atoms(std::vector<AtomPtr> atoms);
  /// Index of `atom` among the components; throws if absent.
  std::size_t index_of(const AtomPtr& atom) const;

 private:
  std::vector<WeightedAtom> components_;
  std::optional<std::size_t> spike_index_;
  std::size_t assigned_ = 0;
};

}  // namespace dpmlds
