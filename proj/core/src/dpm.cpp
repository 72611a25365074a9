#include "dpmlds/dpm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>

#include "dpmlds/errors.hpp"

namespace dpmlds {

namespace {

double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("concentration alpha must be positive and finite");
  }
}

}  // namespace

BaseMeasure::BaseMeasure(NiwParams niw) : base_(std::move(niw)) {
  std::get<NiwParams>(base_).validate();
}

BaseMeasure::BaseMeasure(DiscreteBase discrete) : base_(std::move(discrete)) {
  const auto& d = std::get<DiscreteBase>(base_);
  if (d.atoms.empty() || d.atoms.size() != d.probs.size()) {
    throw ConfigError("discrete base measure needs matching, nonempty atoms and probs");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < d.atoms.size(); ++i) {
    if (!d.atoms[i] || d.atoms[i]->dim() != d.atoms[0]->dim()) {
      throw ConfigError("discrete base atoms must be non-null with equal dimension");
    }
    if (!(d.probs[i] >= 0.0)) throw ConfigError("discrete base probabilities must be >= 0");
    total += d.probs[i];
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("discrete base probabilities must sum to 1");
}

AtomPtr BaseMeasure::sample(RngStream& rng) const {
  if (is_niw()) return make_atom(sample_niw(niw(), rng));
  const auto& d = discrete();
  return d.atoms[rng.categorical(d.probs)];
}

Index BaseMeasure::dim() const {
  return is_niw() ? niw().dim() : discrete().atoms.front()->dim();
}

// ---------------------------------------------------------------------------

void ClusterRegistry::add(const AtomPtr& atom) {
  if (!atom) throw ConfigError("cannot register a null cluster");
  for (auto& e : entries_) {
    if (e.atom == atom) {
      ++e.count;
      ++total_;
      return;
    }
  }
  entries_.push_back({atom, 1});
  ++total_;
}

void ClusterRegistry::remove(const AtomPtr& atom) {
  for (auto it = entries_.begin(); it != entries_.end(); ++it) {
    if (it->atom == atom) {
      if (--it->count == 0) entries_.erase(it);
      --total_;
      return;
    }
  }
  throw ConfigError("cluster is not registered");
}

std::size_t ClusterRegistry::count_of(const AtomPtr& atom) const {
  for (const auto& e : entries_) {
    if (e.atom == atom) return e.count;
  }
  return 0;
}

std::vector<AtomPtr> ClusterRegistry::distinct_atoms() const {
  std::vector<AtomPtr> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.atom);
  return out;
}

bool ClusterRegistry::reconciles(std::span<const AtomPtr> assignments) const {
  if (assignments.size() != total_) return false;
  std::map<const GaussianCluster*, std::size_t> counts;
  for (const auto& a : assignments) ++counts[a.get()];
  if (counts.size() != entries_.size()) return false;
  for (const auto& e : entries_) {
    auto it = counts.find(e.atom.get());
    if (it == counts.end() || it->second != e.count) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

UrnPredictive polya_conditional(const ClusterRegistry& registry, double alpha) {
  check_alpha(alpha);
  const double denom = alpha + static_cast<double>(registry.total());
  UrnPredictive out;
  out.existing.reserve(registry.distinct());
  for (const auto& e : registry.entries()) {
    out.existing.push_back({e.atom, static_cast<double>(e.count) / denom});
  }
  out.fresh = alpha / denom;
  return out;
}

UrnPredictive polya_conditional(std::span<const AtomPtr> assignments, std::size_t exclude,
                                double alpha) {
  if (exclude >= assignments.size()) throw ConfigError("excluded index out of range");
  ClusterRegistry reg;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (i != exclude) reg.add(assignments[i]);
  }
  return polya_conditional(reg, alpha);
}

AtomPtr sample_urn(const UrnPredictive& urn, const BaseMeasure& base, RngStream& rng) {
  std::vector<double> w;
  w.reserve(urn.existing.size() + 1);
  for (const auto& e : urn.existing) w.push_back(e.weight);
  w.push_back(urn.fresh);
  const std::size_t k = rng.categorical(w);
  if (k < urn.existing.size()) return urn.existing[k].atom;
  return base.sample(rng);
}

// ---------------------------------------------------------------------------

StickBreakingDraw stick_breaking(const DpHyper& hyper, std::size_t truncation,
                                 RngStream& rng) {
  check_alpha(hyper.alpha);
  if (truncation == 0) throw ConfigError("stick-breaking truncation must be >= 1");
  StickBreakingDraw out;
  out.weights.reserve(truncation);
  out.atoms.reserve(truncation);
  double remaining = 1.0;
  for (std::size_t k = 0; k < truncation; ++k) {
    const double b = rng.beta(1.0, hyper.alpha);
    out.weights.push_back(remaining * b);
    remaining *= 1.0 - b;
    out.atoms.push_back(hyper.base.sample(rng));
  }
  out.residual = remaining;
  return out;
}

std::size_t default_truncation(double alpha, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(antoniak_expected_clusters(alpha, n))) + 50;
}

double antoniak_expected_clusters(double alpha, std::size_t n) {
  check_alpha(alpha);
  return alpha * std::log1p(static_cast<double>(n) / alpha);
}

double exact_expected_clusters(double alpha, std::size_t n) {
  check_alpha(alpha);
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += alpha / (alpha + static_cast<double>(k));
  return s;
}

std::vector<double> stirling_first_kind_log(std::size_t n) {
  if (n == 0) throw ConfigError("Stirling row requires n >= 1");
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> row{0.0};  // s(1,1) = 1
  row.reserve(n);
  for (std::size_t m = 1; m < n; ++m) {
    // s(m+1,k) = s(m,k-1) + m s(m,k)
    std::vector<double> next(m + 1, kNegInf);
    const double log_m = std::log(static_cast<double>(m));
    for (std::size_t k = 1; k <= m + 1; ++k) {
      const double a = k >= 2 ? row[k - 2] : kNegInf;
      const double b = k <= m ? log_m + row[k - 1] : kNegInf;
      next[k - 1] = log_add_exp(a, b);
    }
    row = std::move(next);
  }
  return row;
}

const std::vector<double>& stirling_row(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, std::vector<double>> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, stirling_first_kind_log(n)).first;
  return it->second;
}

double alpha_log_likelihood(double alpha, std::size_t clusters, std::size_t n) {
  check_alpha(alpha);
  if (n == 0) return clusters == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  if (clusters == 0 || clusters > n) {
    throw ConfigError("cluster count must lie in [1, n]");
  }
  const auto& row = stirling_row(n);
  const double la = std::log(alpha);
  double denom = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k <= n; ++k) {
    denom = log_add_exp(denom, row[k - 1] + static_cast<double>(k) * la);
  }
  return row[clusters - 1] + static_cast<double>(clusters) * la - denom;
}

double alpha_prior_logpdf(double alpha, const AlphaPrior& prior) {
  if (!(alpha > 0.0)) return -std::numeric_limits<double>::infinity();
  const double a = prior.shape();
  const double b = prior.rate();
  return a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(alpha) - b * alpha;
}

double alpha_log_posterior(double alpha, std::size_t clusters, std::size_t n,
                           const AlphaPrior* prior) {
  double lp = alpha_log_likelihood(alpha, clusters, n);
  if (prior) lp += alpha_prior_logpdf(alpha, *prior);
  return lp;
}

double sample_alpha_prior(const AlphaPrior& prior, RngStream& rng) {
  if (!(prior.eta > 0.0) || !(prior.nu > 0.0)) {
    throw ConfigError("alpha prior parameters must be positive");
  }
  // Guard against underflow to exactly zero for tiny shapes.
  return std::max(rng.gamma(prior.shape(), 1.0 / prior.rate()),
                  std::numeric_limits<double>::min());
}

double alpha_mh_acceptance(double current, double proposal, std::size_t clusters,
                           std::size_t n) {
  if (proposal == current) return 1.0;
  const double r =
      alpha_log_likelihood(proposal, clusters, n) - alpha_log_likelihood(current, clusters, n);
  return r >= 0.0 ? 1.0 : std::exp(r);
}

double sample_alpha_mh(double current, std::size_t clusters, std::size_t n,
                       const AlphaPrior& prior, RngStream& rng) {
  const double proposal = sample_alpha_prior(prior, rng);
  const double rho = alpha_mh_acceptance(current, proposal, clusters, n);
  return rng.uniform() < rho ? proposal : current;
}

double sample_alpha_log_rw(double current, std::size_t clusters, std::size_t n,
                           const AlphaPrior& prior, double step, RngStream& rng) {
  check_alpha(current);
  if (!(step > 0.0)) throw ConfigError("random-walk step must be positive");
  const double proposal = current * std::exp(step * rng.normal());
  if (!(proposal > 0.0) || !std::isfinite(proposal)) return current;
  // The log-scale proposal contributes the Jacobian proposal / current.
  const double r = alpha_log_posterior(proposal, clusters, n, &prior) -
                   alpha_log_posterior(current, clusters, n, &prior) +
                   std::log(proposal / current);
  return std::log(rng.uniform()) < r ? proposal : current;
}

// ---------------------------------------------------------------------------

NiwParams FactorizedPsiPrior::sample(RngStream& rng) const {
  const Index d = mu_mean.size();
  if (d == 0 || mu_cov.rows() != d || wishart_scale.rows() != d) {
    throw ConfigError("psi prior dimensions are inconsistent");
  }
  if (!(nu_rate > 0.0) || !(log_kappa_sd >= 0.0) || !(wishart_dof > static_cast<double>(d) - 1.0)) {
    throw ConfigError("psi prior parameters out of range");
  }
  NiwParams psi;
  psi.mu0 = sample_mvn(mu_mean, mu_cov, rng);
  psi.kappa0 = std::exp(log_kappa_mean + log_kappa_sd * rng.normal());
  psi.nu0 = static_cast<double>(d) - 1.0 + rng.gamma(1.0, 1.0 / nu_rate);
  if (psi.nu0 <= static_cast<double>(d) - 1.0) psi.nu0 = static_cast<double>(d) - 1.0 + 1e-12;
  const MatrixXd lambda_inv = sample_wishart(wishart_dof, wishart_scale, rng);
  psi.lambda0 = symmetrize(robust_cholesky(lambda_inv).solve(MatrixXd::Identity(d, d)));
  return psi;
}

NiwParams DiscretePsiPrior::sample(RngStream& rng) const {
  if (values.empty()) throw ConfigError("discrete psi prior is empty");
  if (probs.empty()) {
    return values[static_cast<std::size_t>(rng.uniform() * static_cast<double>(values.size()))];
  }
  if (probs.size() != values.size()) throw ConfigError("discrete psi prior size mismatch");
  return values[rng.categorical(probs)];
}

double psi_log_likelihood(const NiwParams& psi, std::span<const AtomPtr> distinct_atoms) {
  double s = 0.0;
  for (const auto& a : distinct_atoms) s += niw_logpdf(*a, psi);
  return s;
}

double psi_mh_acceptance(const NiwParams& current, const NiwParams& candidate,
                         std::span<const AtomPtr> distinct_atoms) {
  if (candidate == current) return 1.0;
  const double r = psi_log_likelihood(candidate, distinct_atoms) -
                   psi_log_likelihood(current, distinct_atoms);
  if (std::isnan(r)) return 0.0;
  return r >= 0.0 ? 1.0 : std::exp(r);
}

NiwParams sample_psi_mh(const NiwParams& current, std::span<const AtomPtr> distinct_atoms,
                        const PsiPrior& prior, RngStream& rng) {
  NiwParams candidate = prior.sample(rng);
  const double rho = psi_mh_acceptance(current, candidate, distinct_atoms);
  return rng.uniform() < rho ? candidate : current;
}

}  // namespace dpmlds
