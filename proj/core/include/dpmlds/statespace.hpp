#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "dpmlds/gaussian.hpp"
#include "dpmlds/rng.hpp"

namespace dpmlds {

/// Observation sequence z_{1:T}; element t-1 holds z_t.
using Series = std::vector<VectorXd>;

/// Cluster sequences theta_{1:T} for the state (v) and observation (w)
/// noises; element t-1 holds the value at time t.
struct ThetaPath {
  std::vector<AtomPtr> v;
  std::vector<AtomPtr> w;

  std::size_t horizon() const noexcept { return v.size(); }
};

/// x_t = F_t x_{t-1} + C_t u_t + G_t v_t,   z_t = H_t x_t + w_t,
/// x_0 ~ N(init_mean, init_cov).
///
/// Every system matrix is stored either once (time invariant) or once per
/// time step 1..T. Inputs are optional; without them C_t u_t = 0.
class LinearGaussianModel {
 public:
  struct Dims {
    Index nx = 0;
    Index nz = 0;
    Index nu = 0;
    Index nv = 0;
  };

  LinearGaussianModel() = default;
  LinearGaussianModel(MatrixXd f, MatrixXd g, MatrixXd h, VectorXd init_mean,
                      MatrixXd init_cov);

  void set_time_varying(std::vector<MatrixXd> f, std::vector<MatrixXd> g,
                        std::vector<MatrixXd> h);
  void set_inputs(std::vector<MatrixXd> c, std::vector<VectorXd> u);
  void set_h(MatrixXd h);
  void set_init(VectorXd mean, MatrixXd cov);

  const MatrixXd& f(std::size_t t) const { return pick(f_, t); }
  const MatrixXd& g(std::size_t t) const { return pick(g_, t); }
  const MatrixXd& h(std::size_t t) const { return pick(h_, t); }
  /// C_t u_t, or a zero vector when the model has no inputs.
  VectorXd input_term(std::size_t t) const;

  const VectorXd& init_mean() const noexcept { return init_mean_; }
  const MatrixXd& init_cov() const noexcept { return init_cov_; }
  Dims dims() const noexcept { return dims_; }
  bool time_invariant() const noexcept {
    return f_.size() == 1 && g_.size() == 1 && h_.size() == 1;
  }

  /// Shape checks for every stored time step; throws ConfigError.
  void validate(std::size_t horizon = 0) const;

 private:
  static const MatrixXd& pick(const std::vector<MatrixXd>& m, std::size_t t) {
    return m.size() == 1 ? m.front() : m.at(t - 1);
  }

  std::vector<MatrixXd> f_, g_, h_, c_;
  std::vector<VectorXd> u_;
  VectorXd init_mean_;
  MatrixXd init_cov_;
  Dims dims_;
};

/// Forward Kalman quantities at one time step. At t = 0 only mean/cov are
/// meaningful (the state prior).
struct KalmanBelief {
  VectorXd mean;        // x_{t|t}
  MatrixXd cov;         // Sigma_{t|t}
  VectorXd pred_mean;   // x_{t|t-1}
  MatrixXd pred_cov;    // Sigma_{t|t-1}
  VectorXd innov_mean;  // z_{t|t-1}
  MatrixXd innov_cov;   // S_{t|t-1}
  double loglik_increment = 0.0;  // log p(z_t | theta_{1:t}, z_{1:t-1})

  static KalmanBelief prior(const LinearGaussianModel& model);
};

/// Information-form pair (precision, precision * mean) of a possibly
/// non-normalizable Gaussian likelihood in x.
struct BackwardInfo {
  MatrixXd info_mat;
  VectorXd info_vec;

  static BackwardInfo zero(Index nx);
};

/// Output of the backward information filter.
///   future[t]  : information on x_t carried by z_{t+1:T}, t = 0..T (future[T] = 0)
///   current[t] : information on x_t carried by z_{t:T},   t = 1..T (current[0] = future[0])
struct BackwardPass {
  std::vector<BackwardInfo> future;
  std::vector<BackwardInfo> current;
};

struct SmoothedMoment {
  VectorXd mean;
  MatrixXd cov;
};

/// One predict/update step conditional on the clusters at time t. The state
/// noise enters as G (mu^v + v'), the observation noise as mu^w + w'.
/// Joseph-form covariance update. Throws NumericalError naming t when the
/// innovation covariance is singular.
KalmanBelief kalman_step(const LinearGaussianModel& model, std::size_t t,
                         const KalmanBelief& prior, const GaussianCluster& v,
                         const GaussianCluster& w, const VectorXd& z);

/// Filtered beliefs for t = 0..T (index 0 is the state prior).
std::vector<KalmanBelief> kalman_filter(const LinearGaussianModel& model,
                                        const ThetaPath& theta, const Series& z);

/// log p(z_{1:T} | theta_{1:T}) by the prediction-error decomposition.
double kalman_loglik(const LinearGaussianModel& model, const ThetaPath& theta,
                     const Series& z);

/// RTS smoother over a stored forward pass; returns x_{t|T}, Sigma_{t|T} for
/// t = 0..T. Singular predicted covariances are handled with a pseudo-inverse.
std::vector<SmoothedMoment> kalman_smoother(const LinearGaussianModel& model,
                                            const ThetaPath& theta, const Series& z);
std::vector<SmoothedMoment> rts_smooth(const LinearGaussianModel& model,
                                       const std::vector<KalmanBelief>& filtered,
                                       std::size_t first_time = 0);

/// Backward information filter. B_t = G_t * L_t where L_t L_t^T = Sigma^v_t
/// (rectangular pivoted factor, empty when Sigma^v_t = 0).
/// Throws NumericalError when Sigma^w_t is singular.
BackwardPass backward_info_recursion(const LinearGaussianModel& model,
                                     const ThetaPath& theta, const Series& z);

/// log [ p(z_t | theta_{1:t}, z_{1:t-1}) * integral p(z_{t+1:T} | x_t) p(x_t | z_{1:t}) dx_t ]
/// up to a per-t normalization that does not depend on theta_t.
/// `forward` is the Kalman step at t under the candidate theta_t, `future` is
/// BackwardPass::future[t]. Eigenvalues of Sigma_{t|t} below 1e-10 relative
/// to the largest are dropped from the low-rank factorization.
double combined_loglik_at(const LinearGaussianModel& model, std::size_t t,
                          const KalmanBelief& forward, const BackwardInfo& future);

/// Draw x_{0:T} ~ p(x_{0:T} | theta_{1:T}, z_{1:T}) by forward filtering and
/// backward sampling.
std::vector<VectorXd> simulation_smoother(const LinearGaussianModel& model,
                                          const ThetaPath& theta, const Series& z,
                                          RngStream& rng);

struct ObservabilityResult {
  Index rank = 0;
  bool observable = false;
};

/// Rank of the observability matrix of the augmented pair
/// (blockdiag(F, I_nz), [H I_nz]) that governs identifiability of the
/// observation-noise distribution.
ObservabilityResult observability_rank(const MatrixXd& f, const MatrixXd& h);
ObservabilityResult observability_rank(const LinearGaussianModel& model);

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix.
MatrixXd psd_pinv(const MatrixXd& a, double rel_tol = 1e-12);

}  // namespace dpmlds
