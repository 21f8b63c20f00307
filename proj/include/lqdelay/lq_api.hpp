#pragma once

#include <utility>
#include <vector>

#include "lqdelay/delay_model.hpp"
#include "lqdelay/solvers.hpp"

namespace lqd {

/**
 * Continuous LQ problem: minimize int 1/2 (z - zbar)' Q_c (z - zbar) dt over
 * N sampling intervals with piecewise constant inputs and references.
 */
struct ContinuousLqProblem {
  MimoDelaySystem system;
  Matrix q_c;               // n_z x n_z, symmetric PSD
  int horizon_steps = 1;    // N
  Matrix references;        // n_z x N, column k holds zbar_k
  Vector x0;                // plant state mean (stacked), may be empty -> 0
  Matrix p0;                // plant state covariance, may be empty -> 0

  /// Q_c = W_z' W_z.
  static Matrix weight_from_wz(const Matrix& w_z) {
    return w_z.transpose() * w_z;
  }
  void validate() const;
};

struct DiscreteLqProblem {
  AugmentedDiscreteSystem sys;
  StackedCoefficients coeffs;
  DiscretizationResult disc;
  Matrix q;                  // over [x~; u]
  Matrix m;                  // (n_x~ + n_u) x n_z
  std::vector<Vector> q_k;
  std::vector<double> rho_k;
  // Stochastic mode only.
  bool stochastic = false;
  Matrix r_ww;
  std::vector<Matrix> p_k;   // plant covariance P_0 .. P_N
  std::vector<double> rho_s_k;
  double rho_w = 0.0;

  /// psi = sum_k l_k(x_k, u_k) + rho_s_k along the mean trajectory from
  /// the augmented initial state. `u_seq` has one column per step.
  [[nodiscard]] double objective(const Vector& x_tilde0,
                                 const Matrix& u_seq) const;
};

DiscreteLqProblem discretize(const ContinuousLqProblem& p,
                             const SolverOptions& opts, bool stochastic);

/// q_k = M zbar, rho_k = 1/2 zbar' Q_c zbar ts.
std::pair<Vector, double> affine_terms(const Matrix& m, const Vector& z_bar,
                                       const Matrix& q_c, double ts);

/// P_{k+1} = A P_k A' + R_ww for k < n; returns P_0 .. P_n.
std::vector<Matrix> propagate_covariance(const Matrix& p0, const Matrix& a,
                                         const Matrix& r_ww, int n);

/// [P, 0; 0, 0] of size `dim`.
Matrix pad_covariance(const Matrix& p, Eigen::Index dim);

/// 1/2 (tr(Q Pbar_k) + rho_w).
double stochastic_offset(const Matrix& q, const Matrix& p_bar_k, double rho_w);

}  // namespace lqd
