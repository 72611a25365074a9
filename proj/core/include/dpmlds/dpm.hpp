#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "dpmlds/gaussian.hpp"
#include "dpmlds/rng.hpp"

namespace dpmlds {

struct WeightedAtom {
  AtomPtr atom;
  double weight = 0.0;
};

/// A base measure with finite support. Used for discretized test problems
/// where posteriors can be enumerated exactly.
struct DiscreteBase {
  std::vector<AtomPtr> atoms;
  std::vector<double> probs;
};

/// Base distribution G0 of a Dirichlet process: Normal-Inverse-Wishart, or a
/// finite discrete measure.
class BaseMeasure {
 public:
  BaseMeasure(NiwParams niw);  // NOLINT(google-explicit-constructor)
  BaseMeasure(DiscreteBase discrete);  // NOLINT(google-explicit-constructor)

  AtomPtr sample(RngStream& rng) const;
  Index dim() const;

  bool is_niw() const noexcept { return std::holds_alternative<NiwParams>(base_); }
  const NiwParams& niw() const { return std::get<NiwParams>(base_); }
  const DiscreteBase& discrete() const { return std::get<DiscreteBase>(base_); }
  void set_niw(NiwParams niw) { base_ = std::move(niw); }

 private:
  std::variant<NiwParams, DiscreteBase> base_;
};

/// DP(G0, alpha).
struct DpHyper {
  double alpha = 1.0;
  BaseMeasure base;
};

/// alpha ~ Gamma(shape = eta / 2, rate = nu / 2).
struct AlphaPrior {
  double eta = 3.0;
  double nu = 3.0;

  double shape() const noexcept { return 0.5 * eta; }
  double rate() const noexcept { return 0.5 * nu; }
};

/// Occupancy counts of the distinct cluster values currently in use.
/// Distinctness is pointer identity of the atoms.
class ClusterRegistry {
 public:
  struct Entry {
    AtomPtr atom;
    std::size_t count = 0;
  };

  void add(const AtomPtr& atom);
  /// Decrements the atom's count, dropping it once empty. Throws if absent.
  void remove(const AtomPtr& atom);

  std::size_t total() const noexcept { return total_; }
  std::size_t distinct() const noexcept { return entries_.size(); }
  std::size_t count_of(const AtomPtr& atom) const;
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::vector<AtomPtr> distinct_atoms() const;

  /// True when the counts are exactly the multiplicities of `assignments`.
  bool reconciles(std::span<const AtomPtr> assignments) const;

 private:
  std::vector<Entry> entries_;
  std::size_t total_ = 0;
};

/// Polya urn predictive: existing atoms with weight count/(alpha+n), a fresh
/// G0 draw with weight alpha/(alpha+n). Weights sum to one.
struct UrnPredictive {
  std::vector<WeightedAtom> existing;
  double fresh = 1.0;
};

/// Predictive given the registry's contents (the caller has already removed
/// any excluded index).
UrnPredictive polya_conditional(const ClusterRegistry& registry, double alpha);

/// Leave-one-out predictive p(theta_exclude | theta_{-exclude}).
UrnPredictive polya_conditional(std::span<const AtomPtr> assignments,
                                std::size_t exclude, double alpha);

AtomPtr sample_urn(const UrnPredictive& urn, const BaseMeasure& base, RngStream& rng);

struct StickBreakingDraw {
  std::vector<double> weights;
  std::vector<AtomPtr> atoms;
  double residual = 1.0;  // 1 - sum(weights)
};

/// Truncated stick-breaking draw of G ~ DP(G0, alpha) with K sticks.
StickBreakingDraw stick_breaking(const DpHyper& hyper, std::size_t truncation,
                                 RngStream& rng);

/// ceil(alpha log(1 + n/alpha)) + 50.
std::size_t default_truncation(double alpha, std::size_t n);

/// alpha log(1 + n / alpha), the large-n approximation of E[M | alpha, n].
double antoniak_expected_clusters(double alpha, std::size_t n);

/// Exact E[M | alpha, n] = sum_{k=0}^{n-1} alpha / (alpha + k).
double exact_expected_clusters(double alpha, std::size_t n);

/// log|s(n, k)| for k = 1..n (element k-1), unsigned Stirling numbers of the
/// first kind. Throws ConfigError for n = 0.
std::vector<double> stirling_first_kind_log(std::size_t n);

/// Memoized row of stirling_first_kind_log; thread safe.
const std::vector<double>& stirling_row(std::size_t n);

/// log[ s(n,M) alpha^M / sum_k s(n,k) alpha^k ].
double alpha_log_likelihood(double alpha, std::size_t clusters, std::size_t n);

/// alpha_log_likelihood plus the Gamma log prior when `prior` is given
/// (flat prior otherwise). Unnormalized.
double alpha_log_posterior(double alpha, std::size_t clusters, std::size_t n,
                           const AlphaPrior* prior);

double alpha_prior_logpdf(double alpha, const AlphaPrior& prior);
double sample_alpha_prior(const AlphaPrior& prior, RngStream& rng);

/// One Metropolis-Hastings transition for alpha with the Gamma prior as the
/// independence proposal; the acceptance ratio reduces to the likelihood
/// ratio.
double sample_alpha_mh(double current, std::size_t clusters, std::size_t n,
                       const AlphaPrior& prior, RngStream& rng);

/// One random-walk Metropolis-Hastings transition on log alpha with the full
/// posterior (Gamma prior times likelihood) as target.
double sample_alpha_log_rw(double current, std::size_t clusters, std::size_t n,
                           const AlphaPrior& prior, double step, RngStream& rng);

/// Acceptance probability of the independence transition.
double alpha_mh_acceptance(double current, double proposal, std::size_t clusters,
                           std::size_t n);

/// Prior over the NIW hyperparameters of a base measure. Used as the
/// independence proposal of the psi update, so only sampling is required.
class PsiPrior {
 public:
  virtual ~PsiPrior() = default;
  virtual NiwParams sample(RngStream& rng) const = 0;
};

/// mu0 ~ N(mu_mean, mu_cov); log kappa0 ~ N(log_kappa_mean, log_kappa_sd^2);
/// nu0 - (d - 1) ~ Exponential(nu_rate); lambda0^{-1} ~ Wishart(wishart_dof, wishart_scale).
class FactorizedPsiPrior final : public PsiPrior {
 public:
  VectorXd mu_mean;
  MatrixXd mu_cov;
  double log_kappa_mean = 0.0;
  double log_kappa_sd = 1.0;
  double nu_rate = 1.0;
  double wishart_dof = 1.0;
  MatrixXd wishart_scale;

  NiwParams sample(RngStream& rng) const override;
};

/// Uniform prior over an explicit list of candidate hyperparameters.
class DiscretePsiPrior final : public PsiPrior {
 public:
  std::vector<NiwParams> values;
  std::vector<double> probs;

  NiwParams sample(RngStream& rng) const override;
};

/// sum_k log G0(atom_k | psi) over the distinct atoms.
double psi_log_likelihood(const NiwParams& psi, std::span<const AtomPtr> distinct_atoms);

/// min(1, prod_k G0(atom_k|candidate) / prod_k G0(atom_k|current)).
double psi_mh_acceptance(const NiwParams& current, const NiwParams& candidate,
                         std::span<const AtomPtr> distinct_atoms);

NiwParams sample_psi_mh(const NiwParams& current, std::span<const AtomPtr> distinct_atoms,
                        const PsiPrior& prior, RngStream& rng);

}  // namespace dpmlds
