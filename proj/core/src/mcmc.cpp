#include "dpmlds/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include "dpmlds/errors.hpp"

namespace dpmlds {

namespace {

enum class Stage { GibbsJoint, MhJoint, GibbsV, GibbsW, MhV, MhW };

std::vector<Stage> site_plan(bool v_enum, bool w_enum, bool joint) {
  if (v_enum && w_enum) {
    return joint ? std::vector{Stage::GibbsJoint} : std::vector{Stage::GibbsV, Stage::GibbsW};
  }
  if (!v_enum && !w_enum) {
    return joint ? std::vector{Stage::MhJoint} : std::vector{Stage::MhV, Stage::MhW};
  }
  if (v_enum) return {Stage::MhW, Stage::GibbsV};
  return {Stage::MhV, Stage::GibbsW};
}

/// Normalized probabilities from log weights; entries at -inf get zero.
std::vector<double> softmax(const std::vector<double>& logw) {
  double top = -std::numeric_limits<double>::infinity();
  for (double l : logw) top = std::max(top, l);
  std::vector<double> p(logw.size(), 0.0);
  if (!std::isfinite(top)) return p;
  double total = 0.0;
  for (std::size_t k = 0; k < logw.size(); ++k) {
    p[k] = std::exp(logw[k] - top);
    total += p[k];
  }
  for (double& x : p) x /= total;
  return p;
}

std::vector<WeightedAtom> require_support(const ClusterProcess& process) {
  auto s = process.predictive_support();
  if (!s) throw ConfigError("process has no finite predictive support");
  return *s;
}

}  // namespace

ChainState::ChainState(const ChainState& other)
    : theta(other.theta),
      v(other.v ? other.v->clone() : nullptr),
      w(other.w ? other.w->clone() : nullptr) {}

ChainState& ChainState::operator=(const ChainState& other) {
  if (this != &other) {
    ChainState copy(other);
    *this = std::move(copy);
  }
  return *this;
}

ChainState initialize_chain(const ClusterProcess& v_prior, const ClusterProcess& w_prior,
                            std::size_t horizon, RngStream& rng) {
  ChainState s;
  s.v = v_prior.clone();
  s.w = w_prior.clone();
  s.theta.v.reserve(horizon);
  s.theta.w.reserve(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    AtomPtr a = s.v->draw(rng);
    s.v->add(a);
    s.theta.v.push_back(std::move(a));
    AtomPtr b = s.w->draw(rng);
    s.w->add(b);
    s.theta.w.push_back(std::move(b));
  }
  return s;
}

SiteEval evaluate_site(const LinearGaussianModel& model, std::size_t t,
                       const KalmanBelief& prev, const BackwardInfo& future,
                       const GaussianCluster& v, const GaussianCluster& w,
                       const VectorXd& z) {
  SiteEval e;
  e.belief = kalman_step(model, t, prev, v, w, z);
  e.log_target = combined_loglik_at(model, t, e.belief, future);
  return e;
}

double mh_acceptance(double current_log_target, double candidate_log_target) {
  const double r = candidate_log_target - current_log_target;
  if (std::isnan(r)) {
    return candidate_log_target == current_log_target ? 1.0 : 0.0;
  }
  return r >= 0.0 ? 1.0 : std::exp(r);
}

// ---------------------------------------------------------------------------

std::vector<SiteOutcome> site_transition(const LinearGaussianModel& model, std::size_t t,
                                         const KalmanBelief& prev, const BackwardInfo& future,
                                         const VectorXd& z, const ClusterProcess& v_rest,
                                         const ClusterProcess& w_rest, const AtomPtr& current_v,
                                         const AtomPtr& current_w,
                                         const SweepOptions& options) {
  const auto sv = require_support(v_rest);
  const auto sw = require_support(w_rest);
  std::map<std::pair<const void*, const void*>, double> cache;
  auto target = [&](const AtomPtr& a, const AtomPtr& b) {
    const auto key = std::make_pair(static_cast<const void*>(a.get()),
                                    static_cast<const void*>(b.get()));
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    const double v = evaluate_site(model, t, prev, future, *a, *b, z).log_target;
    cache.emplace(key, v);
    return v;
  };

  std::vector<SiteOutcome> dist{{current_v, current_w, 1.0}};
  auto add_to = [](std::vector<SiteOutcome>& out, const AtomPtr& a, const AtomPtr& b, double p) {
    if (p == 0.0) return;
    for (auto& o : out) {
      if (o.v == a && o.w == b) {
        o.prob += p;
        return;
      }
    }
    out.push_back({a, b, p});
  };

  for (Stage stage : site_plan(v_rest.gibbs_enumerable(), w_rest.gibbs_enumerable(),
                               options.joint_update)) {
    std::vector<SiteOutcome> next;
    for (const auto& o : dist) {
      switch (stage) {
        case Stage::GibbsJoint: {
          std::vector<double> logw;
          std::vector<std::pair<AtomPtr, AtomPtr>> pairs;
          for (const auto& a : sv) {
            for (const auto& b : sw) {
              if (a.weight <= 0.0 || b.weight <= 0.0) continue;
              pairs.emplace_back(a.atom, b.atom);
              logw.push_back(std::log(a.weight) + std::log(b.weight) + target(a.atom, b.atom));
            }
          }
          const auto p = softmax(logw);
          for (std::size_t k = 0; k < p.size(); ++k) {
            add_to(next, pairs[k].first, pairs[k].second, o.prob * p[k]);
          }
          break;
        }
        case Stage::GibbsV:
        case Stage::GibbsW: {
          const bool on_v = stage == Stage::GibbsV;
          const auto& support = on_v ? sv : sw;
          std::vector<double> logw;
          std::vector<AtomPtr> atoms;
          for (const auto& a : support) {
            if (a.weight <= 0.0) continue;
            atoms.push_back(a.atom);
            logw.push_back(std::log(a.weight) +
                           (on_v ? target(a.atom, o.w) : target(o.v, a.atom)));
          }
          const auto p = softmax(logw);
          for (std::size_t k = 0; k < p.size(); ++k) {
            if (on_v) {
              add_to(next, atoms[k], o.w, o.prob * p[k]);
            } else {
              add_to(next, o.v, atoms[k], o.prob * p[k]);
            }
          }
          break;
        }
        case Stage::MhJoint: {
          const double cur = target(o.v, o.w);
          for (const auto& a : sv) {
            for (const auto& b : sw) {
              const double q = a.weight * b.weight;
              if (q <= 0.0) continue;
              const double acc =
                  (a.atom == o.v && b.atom == o.w) ? 1.0 : mh_acceptance(cur, target(a.atom, b.atom));
              add_to(next, a.atom, b.atom, o.prob * q * acc);
              add_to(next, o.v, o.w, o.prob * q * (1.0 - acc));
            }
          }
          break;
        }
        case Stage::MhV:
        case Stage::MhW: {
          const bool on_v = stage == Stage::MhV;
          const double cur = target(o.v, o.w);
          for (const auto& a : on_v ? sv : sw) {
            if (a.weight <= 0.0) continue;
            const AtomPtr& nv = on_v ? a.atom : o.v;
            const AtomPtr& nw = on_v ? o.w : a.atom;
            const bool same = nv == o.v && nw == o.w;
            const double acc = same ? 1.0 : mh_acceptance(cur, target(nv, nw));
            add_to(next, nv, nw, o.prob * a.weight * acc);
            add_to(next, o.v, o.w, o.prob * a.weight * (1.0 - acc));
          }
          break;
        }
      }
    }
    dist = std::move(next);
  }
  return dist;
}

// ---------------------------------------------------------------------------

SweepStats gibbs_sweep(const LinearGaussianModel& model, const Series& z, ChainState& state,
                       RngStream& rng, const SweepOptions& options) {
  const std::size_t horizon = z.size();
  if (!state.v || !state.w) throw ConfigError("chain state has no cluster processes");
  if (state.theta.v.size() != horizon || state.theta.w.size() != horizon) {
    throw ConfigError("cluster path length does not match the observations");
  }
  SweepStats stats;
  stats.proposed.assign(horizon, 0);
  stats.accepted.assign(horizon, 0);

  const BackwardPass pass = backward_info_recursion(model, state.theta, z);
  KalmanBelief prev = KalmanBelief::prior(model);
  const auto plan =
      site_plan(state.v->gibbs_enumerable(), state.w->gibbs_enumerable(), options.joint_update);

  for (std::size_t t = 1; t <= horizon; ++t) {
    AtomPtr& cv = state.theta.v[t - 1];
    AtomPtr& cw = state.theta.w[t - 1];
    state.v->remove(cv);
    state.w->remove(cw);
    const BackwardInfo& future = pass.future[t];
    const VectorXd& zt = z[t - 1];
    auto eval = [&](const AtomPtr& a, const AtomPtr& b) {
      return evaluate_site(model, t, prev, future, *a, *b, zt);
    };
    std::optional<SiteEval> cur;
    auto current = [&]() -> SiteEval& {
      if (!cur) cur = eval(cv, cw);
      return *cur;
    };

    for (Stage stage : plan) {
      switch (stage) {
        case Stage::MhJoint:
        case Stage::MhV:
        case Stage::MhW: {
          AtomPtr nv = stage == Stage::MhW ? cv : state.v->draw(rng);
          AtomPtr nw = stage == Stage::MhV ? cw : state.w->draw(rng);
          ++stats.proposed[t - 1];
          if (nv == cv && nw == cw) {
            ++stats.accepted[t - 1];
            break;
          }
          SiteEval cand = eval(nv, nw);
          const double rho = mh_acceptance(current().log_target, cand.log_target);
          if (rho >= 1.0 || rng.uniform() < rho) {
            ++stats.accepted[t - 1];
            cv = std::move(nv);
            cw = std::move(nw);
            cur = std::move(cand);
          }
          break;
        }
        case Stage::GibbsJoint: {
          const auto sv = *state.v->predictive_support();
          const auto sw = *state.w->predictive_support();
          std::vector<double> logw;
          std::vector<std::pair<const AtomPtr*, const AtomPtr*>> pairs;
          std::vector<SiteEval> evals;
          for (const auto& a : sv) {
            for (const auto& b : sw) {
              if (a.weight <= 0.0 || b.weight <= 0.0) continue;
              pairs.emplace_back(&a.atom, &b.atom);
              evals.push_back(eval(a.atom, b.atom));
              logw.push_back(std::log(a.weight) + std::log(b.weight) + evals.back().log_target);
            }
          }
          const std::size_t k = rng.categorical(softmax(logw));
          cv = *pairs[k].first;
          cw = *pairs[k].second;
          cur = std::move(evals[k]);
          break;
        }
        case Stage::GibbsV:
        case Stage::GibbsW: {
          const bool on_v = stage == Stage::GibbsV;
          const auto support = *(on_v ? state.v : state.w)->predictive_support();
          AtomPtr& slot = on_v ? cv : cw;
          if (support.size() == 1) {
            if (support.front().atom != slot) {
              slot = support.front().atom;
              cur.reset();
            }
            break;
          }
          std::vector<double> logw;
          std::vector<const AtomPtr*> atoms;
          std::vector<SiteEval> evals;
          for (const auto& a : support) {
            if (a.weight <= 0.0) continue;
            atoms.push_back(&a.atom);
            evals.push_back(on_v ? eval(a.atom, cw) : eval(cv, a.atom));
            logw.push_back(std::log(a.weight) + evals.back().log_target);
          }
          const std::size_t k = rng.categorical(softmax(logw));
          slot = *atoms[k];
          cur = std::move(evals[k]);
          break;
        }
      }
    }

    state.v->add(cv);
    state.w->add(cw);
    prev = std::move(current().belief);
  }
  return stats;
}

void sample_hyperparameters(ChainState& state, RngStream& rng) {
  if (state.v) state.v->update_hyper(rng);
  if (state.w) state.w->update_hyper(rng);
}

// ---------------------------------------------------------------------------

void ChainConfig::validate() const {
  if (retained < 1) throw ConfigError("retained iteration count N must be >= 1");
}

double ChainTrace::acceptance_rate(std::size_t t) const {
  if (t < 1 || t > proposed.size()) throw ConfigError("time index out of range");
  const auto p = proposed[t - 1];
  return p == 0 ? 0.0 : static_cast<double>(accepted[t - 1]) / static_cast<double>(p);
}

ChainTrace run_chain(LinearGaussianModel model, const Series& z, ChainState state,
                     const ChainConfig& config, ChainExtension* extension) {
  config.validate();
  const std::size_t horizon = z.size();
  if (horizon == 0) throw DataError("observation series is empty");
  model.validate(horizon);
  if (state.theta.horizon() != horizon || !state.v || !state.w) {
    throw ConfigError("chain state does not match the observations");
  }
  const Index nx = model.dims().nx;
  const Index nv = state.v->dim();

  RngStream rng(config.seed, 0);
  ChainTrace trace;
  trace.burn_in = config.burn_in;
  trace.retained = config.retained;
  trace.proposed.assign(horizon, 0);
  trace.accepted.assign(horizon, 0);
  std::vector<VectorXd> sum_mean(horizon + 1, VectorXd::Zero(nx));
  std::vector<MatrixXd> sum_second(horizon + 1, MatrixXd::Zero(nx, nx));
  std::vector<VectorXd> sum_theta(horizon, VectorXd::Zero(nv));
  std::vector<std::size_t> nonspike(horizon, 0);

  const std::size_t total = config.burn_in + config.retained;
  trace.iterations.reserve(total);
  for (std::size_t i = 1; i <= total; ++i) {
    IterationRecord rec;
    rec.iteration = i;
    if (i > 1) {
      const SweepStats stats = gibbs_sweep(model, z, state, rng, config.sweep);
      std::uint64_t p = 0, a = 0;
      for (std::size_t t = 0; t < horizon; ++t) {
        trace.proposed[t] += stats.proposed[t];
        trace.accepted[t] += stats.accepted[t];
        p += stats.proposed[t];
        a += stats.accepted[t];
      }
      rec.acceptance_rate = p == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(p);
      if (config.sample_hyper) sample_hyperparameters(state, rng);
      if (extension) extension->after_sweep(model, z, state, rng);
    }
    rec.v = state.v->summary();
    rec.w = state.w->summary();
    if (extension) rec.extra = extension->record();
    trace.iterations.push_back(std::move(rec));

    if (i <= config.burn_in) continue;
    const auto smoothed = kalman_smoother(model, state.theta, z);
    std::vector<VectorXd> means;
    if (config.keep_smoothed_means) means.reserve(horizon + 1);
    for (std::size_t t = 0; t <= horizon; ++t) {
      sum_mean[t] += smoothed[t].mean;
      sum_second[t] += smoothed[t].cov + smoothed[t].mean * smoothed[t].mean.transpose();
      if (config.keep_smoothed_means) means.push_back(smoothed[t].mean);
    }
    if (config.keep_smoothed_means) trace.smoothed_means.push_back(std::move(means));
    for (std::size_t t = 0; t < horizon; ++t) {
      sum_theta[t] += state.theta.v[t]->mean();
      if (!state.v->is_spike(state.theta.v[t])) ++nonspike[t];
    }
    if (config.keep_occupancy) {
      UrnSnapshot snap;
      if (const ClusterRegistry* reg = state.v->registry()) {
        for (const auto& e : reg->entries()) {
          snap.atoms.push_back({e.atom, static_cast<double>(e.count)});
        }
        snap.assigned = reg->total();
      }
      if (const DpHyper* hyper = state.v->dp_hyper()) {
        snap.alpha = hyper->alpha;
        if (hyper->base.is_niw()) snap.base = std::make_shared<const NiwParams>(hyper->base.niw());
      }
      trace.urns.push_back(std::move(snap));
      trace.theta_samples.push_back(state.theta);
    }
  }

  const double n = static_cast<double>(config.retained);
  trace.mmse_mean.resize(horizon + 1);
  trace.mmse_cov.resize(horizon + 1);
  for (std::size_t t = 0; t <= horizon; ++t) {
    trace.mmse_mean[t] = sum_mean[t] / n;
    trace.mmse_cov[t] =
        symmetrize(sum_second[t] / n - trace.mmse_mean[t] * trace.mmse_mean[t].transpose());
  }
  trace.theta_v_mean.resize(horizon);
  trace.v_nonspike_freq.resize(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    trace.theta_v_mean[t] = sum_theta[t] / n;
    trace.v_nonspike_freq[t] = static_cast<double>(nonspike[t]) / n;
  }
  return trace;
}

ChainTrace run_chain(const LinearGaussianModel& model, const Series& z,
                     const ClusterProcess& v_prior, const ClusterProcess& w_prior,
                     const ChainConfig& config, ChainExtension* extension) {
  RngStream init(config.seed, 1);
  return run_chain(model, z, initialize_chain(v_prior, w_prior, z.size(), init), config,
                   extension);
}

}  // namespace dpmlds
