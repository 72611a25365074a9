#pragma once

#include <Eigen/Dense>
#include <memory>

#include "dpmlds/rng.hpp"

namespace dpmlds {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// A (mean, covariance) pair: the latent cluster value of a Gaussian noise
/// mixture. The covariance is symmetrized on construction and must be PSD.
/// A zero covariance is a legal value (the Dirac atom) and is never jittered.
class GaussianCluster {
 public:
  GaussianCluster(VectorXd mean, MatrixXd cov);

  /// Point mass at `mean` (zero covariance).
  static GaussianCluster dirac(VectorXd mean);
  /// Point mass at the origin of dimension `dim`.
  static GaussianCluster zero(Index dim);

  const VectorXd& mean() const noexcept { return mean_; }
  const MatrixXd& cov() const noexcept { return cov_; }
  Index dim() const noexcept { return mean_.size(); }
  bool is_degenerate() const noexcept { return degenerate_; }

  friend bool operator==(const GaussianCluster& a, const GaussianCluster& b) {
    return a.mean_ == b.mean_ && a.cov_ == b.cov_;
  }

 private:
  VectorXd mean_;
  MatrixXd cov_;
  bool degenerate_ = false;
};

/// Clusters are shared by pointer between the urn bookkeeping, the sampled
/// paths and the particles; identity of the pointer is identity of the
/// cluster.
using AtomPtr = std::shared_ptr<const GaussianCluster>;

inline AtomPtr make_atom(GaussianCluster c) {
  return std::make_shared<const GaussianCluster>(std::move(c));
}

/// Normal-Inverse-Wishart hyperparameters:
///   Sigma^{-1} ~ Wishart(nu0, lambda0^{-1}),  mu | Sigma ~ N(mu0, Sigma / kappa0).
struct NiwParams {
  VectorXd mu0;
  double kappa0 = 1.0;
  double nu0 = 1.0;
  MatrixXd lambda0;

  Index dim() const noexcept { return mu0.size(); }
  /// Throws ConfigError when an invariant is violated.
  void validate() const;

  friend bool operator==(const NiwParams& a, const NiwParams& b) {
    return a.mu0 == b.mu0 && a.kappa0 == b.kappa0 && a.nu0 == b.nu0 &&
           a.lambda0 == b.lambda0;
  }
};

/// Scalar NIW convenience constructor.
NiwParams scalar_niw(double mu0, double kappa0, double nu0, double lambda0);

double mvn_logpdf(const VectorXd& x, const VectorXd& mean, const MatrixXd& cov);
double mvn_logpdf(const VectorXd& x, const GaussianCluster& cluster);

VectorXd sample_mvn(const GaussianCluster& cluster, RngStream& rng);
VectorXd sample_mvn(const VectorXd& mean, const MatrixXd& cov, RngStream& rng);

GaussianCluster sample_niw(const NiwParams& psi, RngStream& rng);

/// Bartlett-decomposition draw W ~ Wishart(dof, scale), E[W] = dof * scale.
MatrixXd sample_wishart(double dof, const MatrixXd& scale, RngStream& rng);

double niw_logpdf(const GaussianCluster& cluster, const NiwParams& psi);
double wishart_logpdf(const MatrixXd& w, double dof, const MatrixXd& scale);
double log_multigamma(double a, Index dim);

/// Cholesky factor of a (near) positive-definite covariance. Adds diagonal
/// jitter 1e-12*trace, escalating by 10x up to 1e-6*trace, when the plain
/// factorization fails. Throws DegenerateDensityError beyond that and for a
/// zero matrix.
Eigen::LLT<MatrixXd> robust_cholesky(const MatrixXd& cov);

/// Rectangular factor L (n x r) with L L^T = cov for a PSD matrix, from a
/// pivoted LDL^T. Pivots at or below rel_tol * max pivot are dropped, so a
/// zero matrix yields an n x 0 factor.
MatrixXd psd_factor(const MatrixXd& cov, double rel_tol = 1e-12);

/// (A + A^T) / 2.
MatrixXd symmetrize(const MatrixXd& a);

/// True when every eigenvalue is >= -tol_scale * max(trace, 1e-300).
bool is_psd(const MatrixXd& a, double tol_scale = 1e-10);

}  // namespace dpmlds
