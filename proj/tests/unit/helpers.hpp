#pragma once

#include <cmath>
#include <initializer_list>
#include <vector>

#include "dpmlds/gaussian.hpp"
#include "dpmlds/rng.hpp"
#include "dpmlds/statespace.hpp"

namespace testutil {

using namespace dpmlds;

inline VectorXd vec(std::initializer_list<double> xs) {
  VectorXd v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

inline MatrixXd scalar(double x) { return MatrixXd::Constant(1, 1, x); }

inline AtomPtr scalar_atom(double mean, double var) {
  return make_atom(GaussianCluster(vec({mean}), scalar(var)));
}

inline MatrixXd random_matrix(Index r, Index c, RngStream& rng, double scale = 1.0) {
  MatrixXd m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

inline MatrixXd random_spd(Index n, RngStream& rng, double floor = 0.2) {
  const MatrixXd a = random_matrix(n, n, rng, 0.6);
  return a * a.transpose() + floor * MatrixXd::Identity(n, n);
}

inline AtomPtr random_atom(Index n, RngStream& rng) {
  VectorXd m(n);
  for (Index i = 0; i < n; ++i) m(i) = 0.5 * rng.normal();
  return make_atom(GaussianCluster(m, random_spd(n, rng)));
}

/// Random stable model with the given dimensions.
inline LinearGaussianModel random_model(Index nx, Index nz, Index nv, RngStream& rng) {
  MatrixXd f = random_matrix(nx, nx, rng, 0.5);
  const double rad = f.eigenvalues().cwiseAbs().maxCoeff();
  if (rad > 0.9) f *= 0.9 / rad;
  VectorXd m0(nx);
  for (Index i = 0; i < nx; ++i) m0(i) = rng.normal();
  return LinearGaussianModel(f, random_matrix(nx, nv, rng), random_matrix(nz, nx, rng), m0,
                             random_spd(nx, rng));
}

inline ThetaPath random_theta(const LinearGaussianModel& m, std::size_t T, RngStream& rng) {
  ThetaPath th;
  for (std::size_t t = 0; t < T; ++t) {
    th.v.push_back(random_atom(m.g(1).cols(), rng));
    th.w.push_back(random_atom(m.h(1).rows(), rng));
  }
  return th;
}

/// Draw z_{1:T} from the model given the cluster path.
inline Series simulate(const LinearGaussianModel& m, const ThetaPath& th, RngStream& rng) {
  VectorXd x = sample_mvn(m.init_mean(), m.init_cov(), rng);
  Series z;
  for (std::size_t t = 1; t <= th.horizon(); ++t) {
    x = m.f(t) * x + m.input_term(t) + m.g(t) * sample_mvn(*th.v[t - 1], rng);
    z.push_back(m.h(t) * x + sample_mvn(*th.w[t - 1], rng));
  }
  return z;
}

inline Series scalar_series(std::initializer_list<double> xs) {
  Series z;
  for (double x : xs) z.push_back(vec({x}));
  return z;
}

}  // namespace testutil
