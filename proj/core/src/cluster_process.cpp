#include "dpmlds/cluster_process.hpp"

#include <cmath>
#include <limits>

#include "dpmlds/errors.hpp"

namespace dpmlds {

namespace {

void accumulate(std::vector<WeightedAtom>& out, const AtomPtr& atom, double weight) {
  for (auto& e : out) {
    if (e.atom == atom) {
      e.weight += weight;
      return;
    }
  }
  out.push_back({atom, weight});
}

/// Existing atoms plus the discrete base spread over its atoms, scaled by
/// `scale`, merged into `out`.
void append_urn_support(std::vector<WeightedAtom>& out, const UrnPredictive& urn,
                        const DiscreteBase& base, double scale) {
  for (const auto& e : urn.existing) accumulate(out, e.atom, scale * e.weight);
  for (std::size_t k = 0; k < base.atoms.size(); ++k) {
    accumulate(out, base.atoms[k], scale * urn.fresh * base.probs[k]);
  }
}

void refresh_dp_hyper(DpHyper& hyper, const HyperSampling& sampling,
                      const ClusterRegistry& registry, RngStream& rng) {
  if (sampling.alpha_prior) {
    const std::size_t m = registry.distinct();
    const std::size_t n = registry.total();
    hyper.alpha = sample_alpha_mh(hyper.alpha, m, n, *sampling.alpha_prior, rng);
    hyper.alpha = sample_alpha_log_rw(hyper.alpha, m, n, *sampling.alpha_prior,
                                      sampling.alpha_rw_step, rng);
  }
  if (sampling.psi_prior && hyper.base.is_niw()) {
    const auto atoms = registry.distinct_atoms();
    hyper.base.set_niw(sample_psi_mh(hyper.base.niw(), atoms, *sampling.psi_prior, rng));
  }
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("concentration alpha must be positive and finite");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

DpmProcess::DpmProcess(DpHyper hyper, HyperSampling sampling)
    : hyper_(std::move(hyper)), sampling_(std::move(sampling)) {
  check_alpha(hyper_.alpha);
}

std::unique_ptr<ClusterProcess> DpmProcess::clone() const {
  return std::make_unique<DpmProcess>(*this);
}

AtomPtr DpmProcess::draw(RngStream& rng) const {
  return sample_urn(polya_conditional(registry_, hyper_.alpha), hyper_.base, rng);
}

std::optional<std::vector<WeightedAtom>> DpmProcess::predictive_support() const {
  if (hyper_.base.is_niw()) return std::nullopt;
  std::vector<WeightedAtom> out;
  append_urn_support(out, polya_conditional(registry_, hyper_.alpha),
                     hyper_.base.discrete(), 1.0);
  return out;
}

void DpmProcess::update_hyper(RngStream& rng) {
  refresh_dp_hyper(hyper_, sampling_, registry_, rng);
}

ProcessSummary DpmProcess::summary() const {
  return {hyper_.alpha, registry_.distinct(), registry_.total(), 0};
}

void DpmProcess::set_alpha(double alpha) {
  check_alpha(alpha);
  hyper_.alpha = alpha;
}

// ---------------------------------------------------------------------------

SpikeDpmProcess::SpikeDpmProcess(DpHyper hyper, SpikeWeight weight, HyperSampling sampling)
    : hyper_(std::move(hyper)),
      weight_(weight),
      sampling_(std::move(sampling)),
      spike_(make_atom(GaussianCluster::zero(hyper_.base.dim()))) {
  check_alpha(hyper_.alpha);
  if (weight_.fixed_lambda) {
    const double l = *weight_.fixed_lambda;
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("spike lambda must lie in [0, 1]");
  } else if (!(weight_.zeta > 0.0) || !(weight_.tau > 0.0)) {
    throw ConfigError("Beta prior parameters of lambda must be positive");
  }
}

std::unique_ptr<ClusterProcess> SpikeDpmProcess::clone() const {
  return std::make_unique<SpikeDpmProcess>(*this);
}

SpikeUrnWeights SpikeDpmProcess::weights() const {
  SpikeUrnWeights out;
  if (weight_.fixed_lambda) {
    out.dpm = *weight_.fixed_lambda;
  } else {
    const double a = weight_.zeta + static_cast<double>(registry_.total());
    const double b = weight_.tau + static_cast<double>(spikes_);
    out.dpm = a / (a + b);
  }
  out.spike = 1.0 - out.dpm;
  out.urn = polya_conditional(registry_, hyper_.alpha);
  return out;
}

AtomPtr SpikeDpmProcess::draw(RngStream& rng) const {
  const SpikeUrnWeights w = weights();
  if (rng.uniform() >= w.dpm) return spike_;
  return sample_urn(w.urn, hyper_.base, rng);
}

std::optional<std::vector<WeightedAtom>> SpikeDpmProcess::predictive_support() const {
  if (hyper_.base.is_niw()) return std::nullopt;
  const SpikeUrnWeights w = weights();
  std::vector<WeightedAtom> out{{spike_, w.spike}};
  append_urn_support(out, w.urn, hyper_.base.discrete(), w.dpm);
  return out;
}

void SpikeDpmProcess::add(const AtomPtr& atom) {
  if (atom == spike_) {
    ++spikes_;
  } else {
    registry_.add(atom);
  }
}

void SpikeDpmProcess::remove(const AtomPtr& atom) {
  if (atom == spike_) {
    if (spikes_ == 0) throw ConfigError("spike atom is not registered");
    --spikes_;
  } else {
    registry_.remove(atom);
  }
}

void SpikeDpmProcess::update_hyper(RngStream& rng) {
  refresh_dp_hyper(hyper_, sampling_, registry_, rng);
}

ProcessSummary SpikeDpmProcess::summary() const {
  return {hyper_.alpha, registry_.distinct(), registry_.total(), spikes_};
}

void SpikeDpmProcess::set_alpha(double alpha) {
  check_alpha(alpha);
  hyper_.alpha = alpha;
}

SpikeUrnWeights spike_urn_conditional(std::span<const AtomPtr> assignments,
                                      std::size_t exclude, const AtomPtr& spike,
                                      double alpha, const SpikeWeight& weight) {
  if (exclude >= assignments.size()) throw ConfigError("excluded index out of range");
  ClusterRegistry reg;
  std::size_t spikes = 0;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (i == exclude) continue;
    if (assignments[i] == spike) {
      ++spikes;
    } else {
      reg.add(assignments[i]);
    }
  }
  SpikeUrnWeights out;
  if (weight.fixed_lambda) {
    out.dpm = *weight.fixed_lambda;
  } else {
    const double a = weight.zeta + static_cast<double>(reg.total());
    const double b = weight.tau + static_cast<double>(spikes);
    out.dpm = a / (a + b);
  }
  out.spike = 1.0 - out.dpm;
  out.urn = polya_conditional(reg, alpha);
  return out;
}

// ---------------------------------------------------------------------------

FiniteMixtureProcess::FiniteMixtureProcess(std::vector<WeightedAtom> components,
                                           std::optional<std::size_t> spike_index)
    : components_(std::move(components)), spike_index_(spike_index) {
  if (components_.empty()) throw ConfigError("finite mixture needs at least one component");
  double total = 0.0;
  for (const auto& c : components_) {
    if (!c.atom || c.atom->dim() != components_.front().atom->dim()) {
      throw ConfigError("finite mixture atoms must be non-null with equal dimension");
    }
    if (!(c.weight >= 0.0)) throw ConfigError("finite mixture weights must be >= 0");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("finite mixture weights must sum to 1");
  if (spike_index_ && *spike_index_ >= components_.size()) {
    throw ConfigError("spike index out of range");
  }
}

std::unique_ptr<ClusterProcess> FiniteMixtureProcess::clone() const {
  return std::make_unique<FiniteMixtureProcess>(*this);
}

AtomPtr FiniteMixtureProcess::draw(RngStream& rng) const {
  std::vector<double> w;
  w.reserve(components_.size());
  for (const auto& c : components_) w.push_back(c.weight);
  return components_[rng.categorical(w)].atom;
}

std::size_t FiniteMixtureProcess::index_of(const AtomPtr& atom) const {
  for (std::size_t k = 0; k < components_.size(); ++k) {
    if (components_[k].atom == atom) return k;
  }
  throw ConfigError("atom is not a component of the finite mixture");
}

void FiniteMixtureProcess::add(const AtomPtr& atom) {
  index_of(atom);
  ++assigned_;
}

void FiniteMixtureProcess::remove(const AtomPtr& atom) {
  index_of(atom);
  if (assigned_ == 0) throw ConfigError("finite mixture has no assignments to remove");
  --assigned_;
}

bool FiniteMixtureProcess::is_spike(const AtomPtr& atom) const {
  return spike_index_ && components_[*spike_index_].atom == atom;
}

ProcessSummary FiniteMixtureProcess::summary() const {
  return {std::numeric_limits<double>::quiet_NaN(), components_.size(), assigned_, 0};
}

void FiniteMixtureProcess::replace_atoms(std::vector<AtomPtr> atoms) {
  if (atoms.size() != components_.size()) {
    throw ConfigError("replacement atom count does not match the mixture");
  }
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    if (!atoms[k] || atoms[k]->dim() != components_[k].atom->dim()) {
      throw ConfigError("replacement atoms must be non-null with matching dimension");
    }
    components_[k].atom = std::move(atoms[k]);
  }
}

}  // namespace dpmlds
