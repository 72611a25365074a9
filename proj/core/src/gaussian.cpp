#include "dpmlds/gaussian.hpp"

#include <cmath>
#include <numbers>

#include "dpmlds/errors.hpp"

namespace dpmlds {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

}  // namespace

MatrixXd symmetrize(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

bool is_psd(const MatrixXd& a, double tol_scale) {
  if (a.size() == 0) return true;
  const double scale = std::max(std::abs(a.trace()), 1e-300);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol_scale * scale;
}

GaussianCluster::GaussianCluster(VectorXd mean, MatrixXd cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size()) {
    throw ConfigError("GaussianCluster: mean/covariance dimension mismatch");
  }
  cov_ = symmetrize(cov_);
  if (!cov_.allFinite() || !mean_.allFinite()) {
    throw ConfigError("GaussianCluster: non-finite parameters");
  }
  degenerate_ = cov_.isZero(0.0);
  if (!degenerate_ && !is_psd(cov_)) {
    throw ConfigError("GaussianCluster: covariance is not positive semidefinite");
  }
}

GaussianCluster GaussianCluster::dirac(VectorXd mean) {
  const Index d = mean.size();
  return GaussianCluster(std::move(mean), MatrixXd::Zero(d, d));
}

GaussianCluster GaussianCluster::zero(Index dim) {
  return dirac(VectorXd::Zero(dim));
}

void NiwParams::validate() const {
  const Index d = dim();
  if (d < 1) throw ConfigError("NIW: empty mean");
  if (!(kappa0 > 0.0)) throw ConfigError("NIW: kappa0 must be positive");
  if (!(nu0 > static_cast<double>(d) - 1.0)) {
    throw ConfigError("NIW: nu0 must exceed dim - 1");
  }
  if (lambda0.rows() != d || lambda0.cols() != d) {
    throw ConfigError("NIW: lambda0 shape mismatch");
  }
  if ((lambda0 - lambda0.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + lambda0.cwiseAbs().maxCoeff())) {
    throw ConfigError("NIW: lambda0 not symmetric");
  }
  Eigen::LLT<MatrixXd> llt(lambda0);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("NIW: lambda0 not positive definite");
  }
}

NiwParams scalar_niw(double mu0, double kappa0, double nu0, double lambda0) {
  NiwParams p;
  p.mu0 = VectorXd::Constant(1, mu0);
  p.kappa0 = kappa0;
  p.nu0 = nu0;
  p.lambda0 = MatrixXd::Constant(1, 1, lambda0);
  return p;
}

Eigen::LLT<MatrixXd> robust_cholesky(const MatrixXd& cov) {
  const double trace = cov.trace();
  if (!(trace > 0.0) || cov.isZero(0.0)) {
    throw DegenerateDensityError("degenerate density: zero covariance");
  }
  Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return llt;
  const Index n = cov.rows();
  for (double jitter = 1e-12 * trace; jitter <= 1e-6 * trace * (1.0 + 1e-9);
       jitter *= 10.0) {
    llt.compute(cov + jitter * MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) return llt;
  }
  throw DegenerateDensityError("degenerate density: covariance singular beyond jitter budget");
}

MatrixXd psd_factor(const MatrixXd& cov, double rel_tol) {
  const Index n = cov.rows();
  if (n == 0 || cov.isZero(0.0)) return MatrixXd(n, 0);
  Eigen::LDLT<MatrixXd> ldlt(cov);
  const VectorXd d = ldlt.vectorD();
  const double dmax = d.maxCoeff();
  if (!(dmax > 0.0)) return MatrixXd(n, 0);
  MatrixXd l = ldlt.matrixL();
  MatrixXd ptl = ldlt.transpositionsP().transpose() * l;
  Index rank = 0;
  for (Index i = 0; i < n; ++i) {
    if (d(i) > rel_tol * dmax) ++rank;
  }
  MatrixXd factor(n, rank);
  Index col = 0;
  for (Index i = 0; i < n; ++i) {
    if (d(i) > rel_tol * dmax) factor.col(col++) = ptl.col(i) * std::sqrt(d(i));
  }
  return factor;
}

double mvn_logpdf(const VectorXd& x, const VectorXd& mean, const MatrixXd& cov) {
  if (x.size() != mean.size() || cov.rows() != mean.size()) {
    throw ConfigError("mvn_logpdf: dimension mismatch");
  }
  const auto llt = robust_cholesky(cov);
  const VectorXd r = llt.matrixL().solve(x - mean);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + logdet + r.squaredNorm());
}

double mvn_logpdf(const VectorXd& x, const GaussianCluster& cluster) {
  if (cluster.is_degenerate()) {
    throw DegenerateDensityError("degenerate density: Dirac atom has no density");
  }
  return mvn_logpdf(x, cluster.mean(), cluster.cov());
}

VectorXd sample_mvn(const VectorXd& mean, const MatrixXd& cov, RngStream& rng) {
  if (cov.isZero(0.0)) return mean;
  const MatrixXd factor = psd_factor(cov);
  VectorXd e(factor.cols());
  for (Index i = 0; i < e.size(); ++i) e(i) = rng.normal();
  return mean + factor * e;
}

VectorXd sample_mvn(const GaussianCluster& cluster, RngStream& rng) {
  if (cluster.is_degenerate()) return cluster.mean();
  return sample_mvn(cluster.mean(), cluster.cov(), rng);
}

MatrixXd sample_wishart(double dof, const MatrixXd& scale, RngStream& rng) {
  const Index d = scale.rows();
  Eigen::LLT<MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("sample_wishart: scale not positive definite");
  }
  MatrixXd a = MatrixXd::Zero(d, d);
  for (Index i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(rng.chi_squared(dof - static_cast<double>(i)));
    for (Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const MatrixXd la = llt.matrixL() * a;
  return symmetrize(la * la.transpose());
}

GaussianCluster sample_niw(const NiwParams& psi, RngStream& rng) {
  const Index d = psi.dim();
  const MatrixXd precision =
      sample_wishart(psi.nu0, psi.lambda0.llt().solve(MatrixXd::Identity(d, d)), rng);
  MatrixXd sigma = symmetrize(precision.llt().solve(MatrixXd::Identity(d, d)));
  VectorXd mu = sample_mvn(psi.mu0, sigma / psi.kappa0, rng);
  return GaussianCluster(std::move(mu), std::move(sigma));
}

double log_multigamma(double a, Index dim) {
  const double p = static_cast<double>(dim);
  double r = 0.25 * p * (p - 1.0) * std::log(std::numbers::pi);
  for (Index j = 0; j < dim; ++j) r += std::lgamma(a - 0.5 * static_cast<double>(j));
  return r;
}

namespace {

double logdet_spd(const MatrixXd& a) {
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    throw DegenerateDensityError("log-determinant of a non-positive-definite matrix");
  }
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace

double wishart_logpdf(const MatrixXd& w, double dof, const MatrixXd& scale) {
  const Index d = w.rows();
  const double p = static_cast<double>(d);
  const double trace = scale.llt().solve(w).trace();
  return 0.5 * (dof - p - 1.0) * logdet_spd(w) - 0.5 * trace -
         0.5 * dof * p * std::log(2.0) - 0.5 * dof * logdet_spd(scale) -
         log_multigamma(0.5 * dof, d);
}

double niw_logpdf(const GaussianCluster& cluster, const NiwParams& psi) {
  if (cluster.is_degenerate()) {
    throw DegenerateDensityError("niw_logpdf: Dirac atom is outside the NIW support");
  }
  const Index d = psi.dim();
  const double p = static_cast<double>(d);
  const MatrixXd& sigma = cluster.cov();
  const double log_normal = mvn_logpdf(cluster.mean(), psi.mu0, sigma / psi.kappa0);
  const double log_iw = 0.5 * psi.nu0 * logdet_spd(psi.lambda0) -
                        0.5 * psi.nu0 * p * std::log(2.0) -
                        log_multigamma(0.5 * psi.nu0, d) -
                        0.5 * (psi.nu0 + p + 1.0) * logdet_spd(sigma) -
                        0.5 * sigma.llt().solve(psi.lambda0).trace();
  return log_normal + log_iw;
}

}  // namespace dpmlds
