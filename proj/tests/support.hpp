#pragma once

// Shared generators and independent oracles for the test binaries.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "lqdelay/delay_model.hpp"

namespace lqd::testing {

inline Matrix randn(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c,
                    double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = nd(rng);
  return m;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// Random Hurwitz matrix, every eigenvalue real part below -margin.
inline Matrix random_stable(std::mt19937_64& rng, Eigen::Index n,
                            double margin = 0.2) {
  Matrix a = randn(rng, n, n, 0.5);
  const double shift =
      Eigen::EigenSolver<Matrix>(a).eigenvalues().real().maxCoeff() + margin +
      uniform(rng, 0.0, 0.5);
  a -= shift * Matrix::Identity(n, n);
  return a;
}

/// Delay with a fractional part in [0.1, 0.9] sample times.
inline double fractional_delay(std::mt19937_64& rng, double ts, int max_int) {
  return ts * (uniform_int(rng, 0, max_int) + uniform(rng, 0.1, 0.9));
}

inline SisoDelayChannel random_channel(std::mt19937_64& rng, Eigen::Index n,
                                       double tau, bool feedthrough = false) {
  SisoDelayChannel ch;
  ch.a_c = random_stable(rng, n);
  ch.b_c = randn(rng, n, 1);
  ch.c_c = randn(rng, 1, n);
  ch.d_c = feedthrough ? uniform(rng, -1.0, 1.0) : 0.0;
  ch.tau = tau;
  return ch;
}

/// n_z x n_u grid of channels with 1 or 2 states and fractional delays.
inline MimoDelaySystem random_system(std::mt19937_64& rng, int n_z, int n_u,
                                     double ts, int max_int_delay = 2,
                                     bool feedthrough = false,
                                     Eigen::Index noise_cols = 0) {
  MimoDelaySystem sys;
  sys.sample_time = ts;
  sys.channels.assign(static_cast<std::size_t>(n_z), {});
  Eigen::Index n_x = 0;
  for (int i = 0; i < n_z; ++i) {
    for (int j = 0; j < n_u; ++j) {
      auto ch = random_channel(rng, uniform_int(rng, 1, 2),
                               fractional_delay(rng, ts, max_int_delay),
                               feedthrough);
      n_x += ch.states();
      sys.channels[static_cast<std::size_t>(i)].push_back(std::move(ch));
    }
  }
  if (noise_cols > 0) sys.g_c = randn(rng, n_x, noise_cols, 0.5);
  return sys;
}

/// Random symmetric positive definite matrix with eigenvalues >= floor.
inline Matrix random_spd(std::mt19937_64& rng, Eigen::Index n,
                         double floor = 0.1) {
  const Matrix r = randn(rng, n, n);
  return r * r.transpose() + floor * Matrix::Identity(n, n);
}

/// Taylor series with scaling and squaring; independent of the library.
inline Matrix taylor_expm(const Matrix& x, int terms = 30) {
  const double norm = x.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  double scale = 1.0;
  while (norm * scale > 0.5) {
    scale *= 0.5;
    ++squarings;
  }
  const Matrix y = scale * x;
  Matrix term = Matrix::Identity(x.rows(), x.cols());
  Matrix sum = term;
  for (int k = 1; k <= terms; ++k) {
    term = term * y / static_cast<double>(k);
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

/// (e^{A t}, int_0^t e^{A s} ds) from one block exponential.
struct ZohPair {
  Matrix phi;
  Matrix gamma;
};

inline ZohPair zoh_oracle(const Matrix& a, double t) {
  const auto n = a.rows();
  Matrix blk = Matrix::Zero(2 * n, 2 * n);
  blk.topLeftCorner(n, n) = a;
  blk.topRightCorner(n, n).setIdentity();
  const Matrix e = taylor_expm(blk * t);
  return {e.topLeftCorner(n, n), e.topRightCorner(n, n)};
}

/// int_0^t e^{A s} G G' e^{A' s} ds by the block-exponential identity.
inline Matrix noise_covariance_oracle(const Matrix& a, const Matrix& g,
                                      double t) {
  const auto n = a.rows();
  Matrix blk = Matrix::Zero(2 * n, 2 * n);
  blk.topLeftCorner(n, n) = -a;
  blk.topRightCorner(n, n) = g * g.transpose();
  blk.bottomRightCorner(n, n) = a.transpose();
  const Matrix e = taylor_expm(blk * t);
  const Matrix f22 = e.bottomRightCorner(n, n);
  return f22.transpose() * e.topRightCorner(n, n);
}

inline double max_abs(const Matrix& x) {
  return x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff();
}

inline double min_eigenvalue(const Matrix& x) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(x).eigenvalues().minCoeff();
}

inline double asymmetry(const Matrix& x) {
  return max_abs(x - x.transpose());
}

/// Least-squares slope of log(err) against log(n).
inline double loglog_slope(const std::vector<double>& n,
                           const std::vector<double>& err) {
  const auto k = static_cast<double>(n.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const double x = std::log(n[i]);
    const double y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

/**
 * Finite-horizon LQ by backward dynamic programming. Stage cost is
 * 1/2 [x; u]' Q [x; u] + q_k' [x; u], no terminal cost. Returns the optimal
 * input sequence from x0, one column per stage.
 */
inline Matrix riccati_inputs(const Matrix& a, const Matrix& b, const Matrix& q,
                             const std::vector<Vector>& q_k, const Vector& x0) {
  const auto n_x = a.rows();
  const auto n_u = b.cols();
  const auto n = static_cast<int>(q_k.size());
  const Matrix qxx = q.topLeftCorner(n_x, n_x);
  const Matrix qxu = q.topRightCorner(n_x, n_u);
  const Matrix quu = q.bottomRightCorner(n_u, n_u);
  Matrix p = Matrix::Zero(n_x, n_x);
  Vector s = Vector::Zero(n_x);
  std::vector<Matrix> gains(static_cast<std::size_t>(n));
  std::vector<Vector> offsets(static_cast<std::size_t>(n));
  for (int k = n - 1; k >= 0; --k) {
    const Vector qx = q_k[static_cast<std::size_t>(k)].head(n_x);
    const Vector qu = q_k[static_cast<std::size_t>(k)].tail(n_u);
    const Matrix huu = quu + b.transpose() * p * b;
    const Matrix hux = qxu.transpose() + b.transpose() * p * a;
    const Vector hu = qu + b.transpose() * s;
    const auto llt = huu.llt();
    const Matrix gain = llt.solve(hux);
    const Vector off = llt.solve(hu);
    gains[static_cast<std::size_t>(k)] = gain;
    offsets[static_cast<std::size_t>(k)] = off;
    const Matrix hxx = qxx + a.transpose() * p * a;
    const Vector hx = qx + a.transpose() * s;
    p = hxx - hux.transpose() * gain;
    p = 0.5 * (p + p.transpose());
    s = hx - hux.transpose() * off;
  }
  Matrix u(n_u, n);
  Vector x = x0;
  for (int k = 0; k < n; ++k) {
    u.col(k) = -gains[static_cast<std::size_t>(k)] * x -
               offsets[static_cast<std::size_t>(k)];
    x = a * x + b * u.col(k);
  }
  return u;
}

}  // namespace lqd::testing
