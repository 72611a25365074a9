#include "dpmlds/deconv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dpmlds/errors.hpp"

namespace dpmlds {

namespace {

AtomPtr scalar_atom(double mean, double var) {
  return make_atom(GaussianCluster(VectorXd::Constant(1, mean), MatrixXd::Constant(1, 1, var)));
}

void check_path(const std::vector<VectorXd>& x_path, const Series& z, Index nx) {
  if (x_path.size() != z.size() + 1) throw ConfigError("state path must hold x_0..x_T");
  for (const auto& x : x_path) {
    if (x.size() != nx) throw ConfigError("state path dimension does not match h");
  }
}

/// Draws h (and sigma_w2 for M8) after every cluster sweep.
class DeconvExtension final : public ChainExtension {
 public:
  DeconvExtension(const DeconvPriors& p, bool sample_sigma, VectorXd h0)
      : priors_(p),
        sample_sigma_(sample_sigma),
        sigma_w2_(p.sigma_w2),
        h_(std::move(h0)),
        sigma_h_(p.sigma_h * MatrixXd::Identity(h_.size(), h_.size())) {}

  void after_sweep(LinearGaussianModel& model, const Series& z, ChainState& state,
                   RngStream& rng) override {
    collapsed_h_moves(model, z, state.theta, rng);
    const auto x = simulation_smoother(model, state.theta, z, rng);
    h_ = sample_h_posterior(x, z, sigma_w2_, sigma_h_, rng);
    model.set_h(observation_row());
    if (!sample_sigma_) return;
    sigma_w2_ = sample_sigma_w2_posterior(x, z, h_, priors_.ig_u, priors_.ig_v, rng);
    auto* w = dynamic_cast<FiniteMixtureProcess*>(state.w.get());
    if (!w || w->components().size() != 1) {
      throw ConfigError("sigma_w2 sampling needs a single-atom observation noise");
    }
    AtomPtr atom = scalar_atom(0.0, sigma_w2_);
    w->replace_atoms({atom});
    std::fill(state.theta.w.begin(), state.theta.w.end(), atom);
  }

  std::map<std::string, std::vector<double>> record() const override {
    return {{"h", std::vector<double>(h_.data(), h_.data() + h_.size())},
            {"sigma_w2", {sigma_w2_}}};
  }

  static MatrixXd observation_row(const VectorXd& h) {
    MatrixXd row(1, h.size() + 1);
    row(0, 0) = 1.0;
    row.rightCols(h.size()) = h.transpose();
    return row;
  }
  MatrixXd observation_row() const { return observation_row(h_); }

 private:
  double h_log_target(LinearGaussianModel& model, const Series& z, const ThetaPath& theta,
                      const VectorXd& h) const {
    model.set_h(observation_row(h));
    return -0.5 * h.squaredNorm() / (sigma_w2_ * priors_.sigma_h) + kalman_loglik(model, theta, z);
  }

  // Metropolis-Hastings on h with the state path integrated out, alternating a
  // multiplicative move along h and an isotropic random walk.
  void collapsed_h_moves(LinearGaussianModel& model, const Series& z, const ThetaPath& theta,
                         RngStream& rng) {
    if (priors_.h_collapsed_moves == 0) return;
    double cur = h_log_target(model, z, theta, h_);
    const double L = static_cast<double>(h_.size());
    for (std::size_t k = 0; k < priors_.h_collapsed_moves; ++k) {
      for (int kind = 0; kind < 2; ++kind) {
        VectorXd cand;
        double log_jac = 0.0;
        if (kind == 0) {
          const double log_c = priors_.h_scale_step * rng.normal();
          cand = std::exp(log_c) * h_;
          log_jac = L * log_c;
        } else {
          cand = h_;
          for (Index i = 0; i < cand.size(); ++i) cand(i) += priors_.h_rw_step * rng.normal();
        }
        const double prop = h_log_target(model, z, theta, cand);
        if (std::log(rng.uniform()) < prop - cur + log_jac) {
          h_ = cand;
          cur = prop;
        }
      }
    }
    model.set_h(observation_row());
  }


  DeconvPriors priors_;
  bool sample_sigma_;
  double sigma_w2_;
  VectorXd h_;
  MatrixXd sigma_h_;
};

}  // namespace

DeconvData simulate_deconv(const DeconvGenerator& gen, RngStream& rng) {
  if (gen.h.size() < 1) throw ConfigError("filter length L must be >= 1");
  if (!(gen.sigma_w2 > 0.0)) throw ConfigError("sigma_w2 must be positive");
  if (!(gen.lambda >= 0.0 && gen.lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  std::vector<double> fw;
  for (const auto& c : gen.fv) fw.push_back(c.weight);
  const Index L = gen.h.size();
  DeconvData d;
  d.v.reserve(gen.horizon);
  d.z.reserve(gen.horizon);
  for (std::size_t t = 0; t < gen.horizon; ++t) {
    double v = 0.0;
    if (rng.bernoulli(gen.lambda)) {
      v = sample_mvn(*gen.fv[rng.categorical(fw)].atom, rng)(0);
    }
    d.v.push_back(v);
    double z = v;
    for (Index k = 1; k <= L; ++k) {
      if (t >= static_cast<std::size_t>(k)) z += gen.h(k - 1) * d.v[t - static_cast<std::size_t>(k)];
    }
    z += std::sqrt(gen.sigma_w2) * rng.normal();
    d.z.push_back(VectorXd::Constant(1, z));
  }
  return d;
}

LinearGaussianModel build_deconv_statespace(const VectorXd& h) {
  const Index L = h.size();
  if (L < 1) throw ConfigError("filter length L must be >= 1");
  MatrixXd f = MatrixXd::Zero(L + 1, L + 1);
  f.bottomLeftCorner(L, L) = MatrixXd::Identity(L, L);
  MatrixXd g = MatrixXd::Zero(L + 1, 1);
  g(0, 0) = 1.0;
  MatrixXd hrow(1, L + 1);
  hrow(0, 0) = 1.0;
  hrow.rightCols(L) = h.transpose();
  return LinearGaussianModel(std::move(f), std::move(g), std::move(hrow), VectorXd::Zero(L + 1),
                             MatrixXd::Zero(L + 1, L + 1));
}

HPosterior h_posterior(const std::vector<VectorXd>& x_path, const Series& z, double sigma_w2,
                       const MatrixXd& sigma_h) {
  const Index L = sigma_h.rows();
  if (L < 1 || sigma_h.cols() != L) throw ConfigError("Sigma_h must be square");
  if (!(sigma_w2 > 0.0)) throw ConfigError("sigma_w2 must be positive");
  check_path(x_path, z, L + 1);
  const auto prior_llt = robust_cholesky(sigma_h);
  MatrixXd precision = prior_llt.solve(MatrixXd::Identity(L, L));
  VectorXd rhs = VectorXd::Zero(L);
  for (std::size_t t = 1; t <= z.size(); ++t) {
    const VectorXd lags = x_path[t].tail(L);
    precision.noalias() += lags * lags.transpose();
    rhs += lags * (z[t - 1](0) - x_path[t](0));
  }
  const Eigen::LLT<MatrixXd> llt(symmetrize(precision));
  if (llt.info() != Eigen::Success) throw NumericalError("h posterior precision is singular");
  HPosterior post;
  const MatrixXd sigma_prime = llt.solve(MatrixXd::Identity(L, L));
  post.mean = sigma_prime * rhs;
  post.cov = symmetrize(sigma_w2 * sigma_prime);
  return post;
}

VectorXd sample_h_posterior(const std::vector<VectorXd>& x_path, const Series& z,
                            double sigma_w2, const MatrixXd& sigma_h, RngStream& rng) {
  const HPosterior post = h_posterior(x_path, z, sigma_w2, sigma_h);
  return sample_mvn(post.mean, post.cov, rng);
}

InverseGammaParams sigma_w2_posterior(const std::vector<VectorXd>& x_path, const Series& z,
                                      const VectorXd& h, double u, double v) {
  if (!(u > 0.0) || !(v > 0.0)) throw ConfigError("inverse-gamma prior parameters must be positive");
  check_path(x_path, z, h.size() + 1);
  double ss = 0.0;
  for (std::size_t t = 1; t <= z.size(); ++t) {
    const double pred = x_path[t](0) + h.dot(x_path[t].tail(h.size()));
    const double r = z[t - 1](0) - pred;
    ss += r * r;
  }
  return {u + 0.5 * static_cast<double>(z.size()), v + 0.5 * ss};
}

double sample_sigma_w2_posterior(const std::vector<VectorXd>& x_path, const Series& z,
                                 const VectorXd& h, double u, double v, RngStream& rng) {
  const InverseGammaParams p = sigma_w2_posterior(x_path, z, h, u, v);
  return p.scale / rng.gamma(p.shape, 1.0);
}

std::string variant_name(DeconvVariant v) {
  return "M" + std::to_string(static_cast<int>(v) + 1);
}

DeconvVariant parse_variant(const std::string& name) {
  for (DeconvVariant v : all_variants()) {
    if (variant_name(v) == name) return v;
  }
  throw ConfigError("unknown deconvolution variant '" + name + "'");
}

std::vector<DeconvVariant> all_variants() {
  return {DeconvVariant::M1, DeconvVariant::M2, DeconvVariant::M3, DeconvVariant::M4,
          DeconvVariant::M5, DeconvVariant::M6, DeconvVariant::M7, DeconvVariant::M8};
}

std::unique_ptr<ClusterProcess> deconv_v_process(DeconvVariant variant, const DeconvPriors& p) {
  const double lambda = p.lambda;
  switch (variant) {
    case DeconvVariant::M2:
      return std::make_unique<FiniteMixtureProcess>(
          std::vector<WeightedAtom>{{make_atom(GaussianCluster::zero(1)), 1.0 - lambda},
                                    {scalar_atom(2.0, 0.5), 0.7 * lambda},
                                    {scalar_atom(-1.0, 0.1), 0.3 * lambda}},
          0);
    case DeconvVariant::M3:
      return std::make_unique<FiniteMixtureProcess>(
          std::vector<WeightedAtom>{{make_atom(GaussianCluster::zero(1)), 1.0 - lambda},
                                    {scalar_atom(1.1, 2.3), lambda}},
          0);
    default:
      break;
  }
  double alpha = p.alpha_init;
  HyperSampling sampling;
  switch (variant) {
    case DeconvVariant::M4: alpha = 0.1; break;
    case DeconvVariant::M5: alpha = 1.0; break;
    case DeconvVariant::M6: alpha = 10.0; break;
    case DeconvVariant::M7: alpha = 100.0; break;
    default: sampling.alpha_prior = p.alpha_prior; break;
  }
  return std::make_unique<SpikeDpmProcess>(DpHyper{alpha, BaseMeasure(p.base)},
                                           SpikeWeight::beta(p.zeta, p.tau), sampling);
}

DeconvResult run_deconv(const Series& z, const std::vector<double>* v_true,
                        const DeconvRunConfig& config) {
  if (z.empty()) throw DataError("observation series is empty");
  for (const auto& zt : z) {
    if (zt.size() != 1) throw DataError("deconvolution expects scalar observations");
  }
  if (v_true && v_true->size() != z.size()) throw DataError("ground truth length differs from T");
  const DeconvPriors& p = config.priors;
  if (!(p.sigma_w2 > 0.0)) throw ConfigError("sigma_w2 must be positive");
  const bool sample_sigma = config.variant == DeconvVariant::M8;

  DeconvExtension ext(p, sample_sigma,
                      config.initial_h.size() ? config.initial_h
                                              : VectorXd::Zero(static_cast<Index>(p.filter_length)));
  if (config.initial_h.size() && config.initial_h.size() != static_cast<Index>(p.filter_length)) {
    throw ConfigError("initial h length differs from the filter length");
  }
  LinearGaussianModel model = build_deconv_statespace(
      config.initial_h.size() ? config.initial_h
                              : VectorXd::Zero(static_cast<Index>(p.filter_length)));
  const auto v_proc = deconv_v_process(config.variant, p);
  const FiniteMixtureProcess w_proc({{scalar_atom(0.0, p.sigma_w2), 1.0}});

  ChainConfig cc;
  cc.burn_in = config.burn_in;
  cc.retained = config.retained;
  cc.seed = config.seed;
  cc.keep_smoothed_means = false;
  cc.keep_occupancy = config.keep_occupancy;
  DeconvResult r;
  r.trace = run_chain(model, z, *v_proc, w_proc, cc, &ext);

  const std::size_t T = z.size();
  r.v_mmse.resize(T);
  r.v_var.resize(T);
  for (std::size_t t = 1; t <= T; ++t) {
    r.v_mmse[t - 1] = r.trace.mmse_mean[t](0);
    r.v_var[t - 1] = r.trace.mmse_cov[t](0, 0);
  }
  for (const auto& it : r.trace.iterations) {
    if (it.extra.count("h")) {
      const auto& h = it.extra.at("h");
      r.h_trace.push_back(Eigen::Map<const VectorXd>(h.data(), static_cast<Index>(h.size())));
      r.sigma_w2_trace.push_back(it.extra.at("sigma_w2").front());
    } else {
      r.h_trace.push_back(VectorXd::Zero(static_cast<Index>(p.filter_length)));
      r.sigma_w2_trace.push_back(p.sigma_w2);
    }
    r.alpha_trace.push_back(it.v.alpha);
  }
  r.e_mse = v_true ? e_mse(*v_true, r.v_mmse) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

double e_mse(const std::vector<double>& truth, const std::vector<double>& estimate) {
  if (truth.size() != estimate.size() || truth.empty()) {
    throw ConfigError("e_MSE needs equal-length nonempty sequences");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = truth[i] - estimate[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(truth.size()));
}

std::vector<DeconvBenchRow> run_deconv_benchmark(
    const DeconvBenchConfig& config,
    const std::function<void(DeconvVariant, std::uint64_t, const DeconvResult&)>& on_run) {
  if (config.seeds.empty()) throw ConfigError("benchmark needs at least one seed");
  if (config.variants.empty()) throw ConfigError("benchmark needs at least one variant");
  std::vector<DeconvBenchRow> rows;
  for (DeconvVariant v : config.variants) rows.push_back({v, {}, 0.0, 0.0, 0.0});
  for (std::uint64_t seed : config.seeds) {
    RngStream data_rng(seed, 100);
    const DeconvData data = simulate_deconv(config.generator, data_rng);
    for (auto& row : rows) {
      DeconvRunConfig rc;
      rc.variant = row.variant;
      rc.priors = config.priors;
      rc.burn_in = config.burn_in;
      rc.retained = config.retained;
      rc.seed = mix64(seed) ^ static_cast<std::uint64_t>(row.variant);
      rc.keep_occupancy = static_cast<bool>(on_run);
      const DeconvResult res = run_deconv(data.z, &data.v, rc);
      row.e_mse.push_back(res.e_mse);
      if (on_run) on_run(row.variant, seed, res);
    }
  }
  for (auto& row : rows) {
    const double n = static_cast<double>(row.e_mse.size());
    row.mean = std::accumulate(row.e_mse.begin(), row.e_mse.end(), 0.0) / n;
    double ss = 0.0;
    for (double e : row.e_mse) ss += (e - row.mean) * (e - row.mean);
    row.stddev = row.e_mse.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    std::vector<double> sorted = row.e_mse;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    row.median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  }
  return rows;
}

}  // namespace dpmlds
