#include "dpmlds/statespace.hpp"

#include <algorithm>
#include <cmath>

#include "dpmlds/errors.hpp"

namespace dpmlds {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Eigenvalue cutoff, relative to the largest eigenvalue of Sigma_{t|t}, for
// the low-rank factorization in combined_loglik_at.
constexpr double kRankTol = 1e-10;

Eigen::LLT<MatrixXd> spd_cholesky(const MatrixXd& a, std::size_t t, const char* what) {
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success || !a.allFinite()) {
    throw NumericalError(std::string("singular ") + what, t);
  }
  return llt;
}

double llt_logdet(const Eigen::LLT<MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

// --- LinearGaussianModel --------------------------------------------------

LinearGaussianModel::LinearGaussianModel(MatrixXd f, MatrixXd g, MatrixXd h,
                                         VectorXd init_mean, MatrixXd init_cov) {
  dims_.nx = f.rows();
  dims_.nz = h.rows();
  dims_.nv = g.cols();
  f_.push_back(std::move(f));
  g_.push_back(std::move(g));
  h_.push_back(std::move(h));
  init_mean_ = std::move(init_mean);
  init_cov_ = symmetrize(init_cov);
  validate();
}

void LinearGaussianModel::set_time_varying(std::vector<MatrixXd> f,
                                           std::vector<MatrixXd> g,
                                           std::vector<MatrixXd> h) {
  if (f.empty() || g.empty() || h.empty()) {
    throw ConfigError("time-varying model needs at least one matrix per kind");
  }
  f_ = std::move(f);
  g_ = std::move(g);
  h_ = std::move(h);
  dims_.nx = f_.front().rows();
  dims_.nz = h_.front().rows();
  dims_.nv = g_.front().cols();
  validate();
}

void LinearGaussianModel::set_inputs(std::vector<MatrixXd> c, std::vector<VectorXd> u) {
  c_ = std::move(c);
  u_ = std::move(u);
  dims_.nu = c_.empty() ? 0 : c_.front().cols();
  validate();
}

void LinearGaussianModel::set_h(MatrixXd h) {
  h_.assign(1, std::move(h));
  validate();
}

void LinearGaussianModel::set_init(VectorXd mean, MatrixXd cov) {
  init_mean_ = std::move(mean);
  init_cov_ = symmetrize(cov);
  validate();
}

VectorXd LinearGaussianModel::input_term(std::size_t t) const {
  if (c_.empty() || u_.empty()) return VectorXd::Zero(dims_.nx);
  const MatrixXd& c = pick(c_, t);
  const VectorXd& u = u_.size() == 1 ? u_.front() : u_.at(t - 1);
  return c * u;
}

void LinearGaussianModel::validate(std::size_t horizon) const {
  const auto check_count = [&](const auto& v, const char* name) {
    if (v.size() != 1 && horizon > 0 && v.size() < horizon) {
      throw ConfigError(std::string("model: too few time steps for ") + name);
    }
  };
  check_count(f_, "F");
  check_count(g_, "G");
  check_count(h_, "H");
  for (const auto& f : f_) {
    if (f.rows() != dims_.nx || f.cols() != dims_.nx) throw ConfigError("model: F must be nx x nx");
  }
  for (const auto& g : g_) {
    if (g.rows() != dims_.nx || g.cols() != dims_.nv) throw ConfigError("model: G must be nx x nv");
  }
  for (const auto& h : h_) {
    if (h.rows() != dims_.nz || h.cols() != dims_.nx) throw ConfigError("model: H must be nz x nx");
  }
  for (const auto& c : c_) {
    if (c.rows() != dims_.nx || c.cols() != dims_.nu) throw ConfigError("model: C must be nx x nu");
  }
  for (const auto& u : u_) {
    if (u.size() != dims_.nu) throw ConfigError("model: input dimension mismatch");
  }
  if (init_mean_.size() != dims_.nx || init_cov_.rows() != dims_.nx ||
      init_cov_.cols() != dims_.nx) {
    throw ConfigError("model: initial state prior has wrong dimension");
  }
  if (!init_cov_.isZero(0.0) && !is_psd(init_cov_)) {
    throw ConfigError("model: initial covariance is not PSD");
  }
}

KalmanBelief KalmanBelief::prior(const LinearGaussianModel& model) {
  KalmanBelief b;
  b.mean = model.init_mean();
  b.cov = model.init_cov();
  return b;
}

BackwardInfo BackwardInfo::zero(Index nx) {
  return {MatrixXd::Zero(nx, nx), VectorXd::Zero(nx)};
}

// --- forward pass ---------------------------------------------------------

KalmanBelief kalman_step(const LinearGaussianModel& model, std::size_t t,
                         const KalmanBelief& prior, const GaussianCluster& v,
                         const GaussianCluster& w, const VectorXd& z) {
  const MatrixXd& f = model.f(t);
  const MatrixXd& g = model.g(t);
  const MatrixXd& h = model.h(t);
  if (z.size() != h.rows()) throw DataError("observation dimension mismatch at t=" + std::to_string(t));
  if (v.dim() != g.cols() || w.dim() != h.rows()) {
    throw ConfigError("cluster dimension mismatch at t=" + std::to_string(t));
  }

  KalmanBelief b;
  b.pred_mean = f * prior.mean + model.input_term(t) + g * v.mean();
  b.pred_cov = f * prior.cov * f.transpose();
  if (!v.is_degenerate()) b.pred_cov.noalias() += g * v.cov() * g.transpose();
  b.pred_cov = symmetrize(b.pred_cov);

  b.innov_mean = h * b.pred_mean + w.mean();
  b.innov_cov = symmetrize(h * b.pred_cov * h.transpose() + w.cov());

  const auto llt = spd_cholesky(b.innov_cov, t, "innovation covariance");
  const VectorXd resid = z - b.innov_mean;
  const MatrixXd gain = llt.solve(h * b.pred_cov).transpose();  // P H^T S^{-1}

  b.mean = b.pred_mean + gain * resid;
  const MatrixXd ikh = MatrixXd::Identity(f.rows(), f.rows()) - gain * h;
  b.cov = ikh * b.pred_cov * ikh.transpose();
  if (!w.is_degenerate()) b.cov.noalias() += gain * w.cov() * gain.transpose();
  b.cov = symmetrize(b.cov);

  const VectorXd white = llt.matrixL().solve(resid);
  b.loglik_increment = -0.5 * (static_cast<double>(z.size()) * kLog2Pi +
                               llt_logdet(llt) + white.squaredNorm());
  if (!std::isfinite(b.loglik_increment)) {
    throw NumericalError("non-finite log-likelihood increment", t);
  }
  return b;
}

std::vector<KalmanBelief> kalman_filter(const LinearGaussianModel& model,
                                        const ThetaPath& theta, const Series& z) {
  const std::size_t T = z.size();
  if (theta.v.size() != T || theta.w.size() != T) {
    throw ConfigError("kalman_filter: cluster path length differs from series length");
  }
  std::vector<KalmanBelief> out;
  out.reserve(T + 1);
  out.push_back(KalmanBelief::prior(model));
  for (std::size_t t = 1; t <= T; ++t) {
    out.push_back(kalman_step(model, t, out.back(), *theta.v[t - 1], *theta.w[t - 1], z[t - 1]));
  }
  return out;
}

double kalman_loglik(const LinearGaussianModel& model, const ThetaPath& theta,
                     const Series& z) {
  double ll = 0.0;
  for (const auto& b : kalman_filter(model, theta, z)) ll += b.loglik_increment;
  return ll;
}

MatrixXd psd_pinv(const MatrixXd& a, double rel_tol) {
  const Index n = a.rows();
  if (n == 0) return a;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(a));
  const VectorXd& ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  if (!(top > 0.0)) return MatrixXd::Zero(n, n);
  VectorXd inv(n);
  for (Index i = 0; i < n; ++i) inv(i) = ev(i) > rel_tol * top ? 1.0 / ev(i) : 0.0;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

// --- smoothing ------------------------------------------------------------

std::vector<SmoothedMoment> rts_smooth(const LinearGaussianModel& model,
                                       const std::vector<KalmanBelief>& filtered,
                                       std::size_t first_time) {
  const std::size_t n = filtered.size();
  std::vector<SmoothedMoment> out(n);
  if (n == 0) return out;
  out[n - 1] = {filtered[n - 1].mean, filtered[n - 1].cov};
  for (std::size_t k = n - 1; k-- > 0;) {
    const std::size_t t_next = first_time + k + 1;
    const KalmanBelief& cur = filtered[k];
    const KalmanBelief& nxt = filtered[k + 1];
    const MatrixXd gain = cur.cov * model.f(t_next).transpose() * psd_pinv(nxt.pred_cov);
    out[k].mean = cur.mean + gain * (out[k + 1].mean - nxt.pred_mean);
    out[k].cov = symmetrize(cur.cov + gain * (out[k + 1].cov - nxt.pred_cov) * gain.transpose());
  }
  return out;
}

std::vector<SmoothedMoment> kalman_smoother(const LinearGaussianModel& model,
                                            const ThetaPath& theta, const Series& z) {
  return rts_smooth(model, kalman_filter(model, theta, z), 0);
}

// --- backward information filter -------------------------------------------

BackwardPass backward_info_recursion(const LinearGaussianModel& model,
                                     const ThetaPath& theta, const Series& z) {
  const std::size_t T = z.size();
  if (theta.v.size() != T || theta.w.size() != T) {
    throw ConfigError("backward_info_recursion: cluster path length differs from series length");
  }
  const Index nx = model.dims().nx;
  BackwardPass pass;
  pass.future.assign(T + 1, BackwardInfo::zero(nx));
  pass.current.assign(T + 1, BackwardInfo::zero(nx));

  for (std::size_t t = T; t >= 1; --t) {
    const GaussianCluster& v = *theta.v[t - 1];
    const GaussianCluster& w = *theta.w[t - 1];
    const MatrixXd& h = model.h(t);

    // Fold in z_t.
    if (w.is_degenerate()) throw NumericalError("singular observation-noise covariance", t);
    const auto r_llt = spd_cholesky(w.cov(), t, "observation-noise covariance");
    const MatrixXd rinv_h = r_llt.solve(h);
    BackwardInfo& cur = pass.current[t];
    cur.info_mat = symmetrize(pass.future[t].info_mat + h.transpose() * rinv_h);
    cur.info_vec = pass.future[t].info_vec + rinv_h.transpose() * (z[t - 1] - w.mean());

    // Propagate through x_t = F x_{t-1} + u' + B e.
    const MatrixXd& f = model.f(t);
    const MatrixXd b = v.is_degenerate() ? MatrixXd(nx, 0) : MatrixXd(model.g(t) * psd_factor(v.cov()));
    const VectorXd u_shift = model.input_term(t) + model.g(t) * v.mean();
    MatrixXd p_tilde = cur.info_mat;
    VectorXd h_tilde = cur.info_vec;
    if (b.cols() > 0) {
      const MatrixXd pb = cur.info_mat * b;
      MatrixXd m = b.transpose() * pb;
      m.diagonal().array() += 1.0;
      const auto delta = spd_cholesky(m, t, "backward Delta matrix");
      p_tilde -= pb * delta.solve(pb.transpose());
      h_tilde -= pb * delta.solve(b.transpose() * cur.info_vec);
    }
    BackwardInfo& prev = pass.future[t - 1];
    prev.info_mat = symmetrize(f.transpose() * p_tilde * f);
    prev.info_vec = f.transpose() * (h_tilde - p_tilde * u_shift);
  }
  pass.current[0] = pass.future[0];
  return pass;
}

double combined_loglik_at(const LinearGaussianModel& model, std::size_t t,
                          const KalmanBelief& forward, const BackwardInfo& future) {
  (void)model;
  const MatrixXd& p = future.info_mat;
  const VectorXd& hv = future.info_vec;
  if (p.isZero(0.0) && hv.isZero(0.0)) return forward.loglik_increment;

  const VectorXd& m = forward.mean;
  const VectorXd pm = p * m;
  double value = forward.loglik_increment - 0.5 * m.dot(pm) + m.dot(hv);

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(forward.cov);
  const VectorXd& ev = es.eigenvalues();
  const double top = ev.size() > 0 ? ev.maxCoeff() : 0.0;
  if (!(top > 0.0)) return value;

  Index rank = 0;
  for (Index i = 0; i < ev.size(); ++i) rank += ev(i) > kRankTol * top ? 1 : 0;
  MatrixXd l(m.size(), rank);
  Index col = 0;
  for (Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > kRankTol * top) l.col(col++) = es.eigenvectors().col(i) * std::sqrt(ev(i));
  }
  MatrixXd core = l.transpose() * p * l;
  core.diagonal().array() += 1.0;
  const auto llt = spd_cholesky(symmetrize(core), t, "combined likelihood core matrix");
  const VectorXd g = l.transpose() * (hv - pm);
  const VectorXd white = llt.matrixL().solve(g);
  value += -0.5 * llt_logdet(llt) + 0.5 * white.squaredNorm();
  if (!std::isfinite(value)) throw NumericalError("non-finite combined likelihood", t);
  return value;
}

std::vector<VectorXd> simulation_smoother(const LinearGaussianModel& model,
                                          const ThetaPath& theta, const Series& z,
                                          RngStream& rng) {
  const auto filtered = kalman_filter(model, theta, z);
  const std::size_t T = z.size();
  std::vector<VectorXd> x(T + 1);
  x[T] = sample_mvn(filtered[T].mean, filtered[T].cov, rng);
  for (std::size_t t = T; t-- > 0;) {
    const KalmanBelief& cur = filtered[t];
    const KalmanBelief& nxt = filtered[t + 1];
    const MatrixXd cross = cur.cov * model.f(t + 1).transpose();
    const MatrixXd gain = cross * psd_pinv(nxt.pred_cov);
    const VectorXd mean = cur.mean + gain * (x[t + 1] - nxt.pred_mean);
    const MatrixXd cov = symmetrize(cur.cov - gain * cross.transpose());
    x[t] = sample_mvn(mean, cov, rng);
  }
  return x;
}

// --- observability -----------------------------------------------------------

ObservabilityResult observability_rank(const MatrixXd& f, const MatrixXd& h) {
  const Index nx = f.rows();
  const Index nz = h.rows();
  const Index n = nx + nz;
  MatrixXd ft = MatrixXd::Zero(n, n);
  ft.topLeftCorner(nx, nx) = f;
  ft.bottomRightCorner(nz, nz).setIdentity();
  MatrixXd ht(nz, n);
  ht << h, MatrixXd::Identity(nz, nz);

  MatrixXd obs(nz * n, n);
  MatrixXd block = ht;
  for (Index k = 0; k < n; ++k) {
    obs.middleRows(k * nz, nz) = block;
    block = block * ft;
  }
  Eigen::JacobiSVD<MatrixXd> svd(obs);
  const VectorXd& sv = svd.singularValues();
  ObservabilityResult r;
  const double top = sv.size() > 0 ? sv.maxCoeff() : 0.0;
  if (top > 0.0) {
    for (Index i = 0; i < sv.size(); ++i) r.rank += sv(i) > 1e-10 * top ? 1 : 0;
  }
  r.observable = r.rank == n;
  return r;
}

ObservabilityResult observability_rank(const LinearGaussianModel& model) {
  if (!model.time_invariant()) {
    throw ConfigError("observability_rank requires a time-invariant model");
  }
  return observability_rank(model.f(1), model.h(1));
}

}  // namespace dpmlds
