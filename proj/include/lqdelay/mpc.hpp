#pragma once

#include <vector>

#include "lqdelay/delay_model.hpp"

namespace lqd {

struct InputBounds {
  Vector u_min, u_max;    // per input
  Vector du_min, du_max;  // per input, on u_k - u_{k-1}

  /// Same scalar bounds on every input.
  static InputBounds uniform(Eigen::Index n_u, double u_lim, double du_lim);
  void validate(Eigen::Index n_u) const;
};

/**
 * Dense QP in the stacked input sequence u = [u_0; ...; u_{N-1}]:
 * minimize 1/2 u' h u + g' u.
 */
struct CondensedQp {
  Matrix h;
  Vector g;
  InputBounds bounds;
  int horizon = 0;
  Eigen::Index n_u = 0;
  bool ridge_applied = false;
  Matrix h_inv;  // optional cached inverse of h, reused across solves

  [[nodiscard]] double objective(const Vector& u) const {
    return 0.5 * u.dot(h * u) + g.dot(u);
  }
};

/**
 * Precomputed condensing maps for a fixed (A, B, Q, N). The linear term is
 * g = f_x x0 + sum_k S_k' q_k with S_k = [Gamma_k; I_k].
 */
class Condenser {
 public:
  Condenser(const Matrix& a, const Matrix& b, const Matrix& q, int n);

  [[nodiscard]] const Matrix& hessian() const { return h_; }
  [[nodiscard]] Vector linear_term(const Vector& x0,
                                   const std::vector<Vector>& q_k) const;
  /// sum_k S_k' m, for a stage term q_k = m zbar that is constant over k.
  [[nodiscard]] Matrix stage_sum(const Matrix& m) const;
  [[nodiscard]] const Matrix& state_map() const { return f_x_; }
  /// Stacked predicted states [x_1; ...; x_N].
  [[nodiscard]] Vector predict(const Vector& x0, const Vector& u) const;

  [[nodiscard]] int horizon() const { return n_; }
  [[nodiscard]] Eigen::Index inputs() const { return n_u_; }
  [[nodiscard]] Eigen::Index states() const { return n_x_; }

 private:
  Matrix a_, b_;
  int n_;
  Eigen::Index n_x_, n_u_;
  Matrix h_;
  Matrix f_x_;
  std::vector<Matrix> s_t_;  // S_k' per stage
};

CondensedQp condense(const Matrix& a, const Matrix& b, const Matrix& q,
                     const std::vector<Vector>& q_k, const Vector& x0, int n);

/// Inverse of a symmetric positive definite matrix via Cholesky.
Matrix spd_inverse(const Matrix& h);

/// H <- H + 1e-9 I when its smallest eigenvalue is below 1e-10.
bool regularize(Matrix& h);

struct QpOptions {
  int max_iterations = 5000;
  double tolerance = 1e-11;  // relative to kkt_scale
};

struct QpResult {
  Vector u;
  int iterations = 0;
  std::vector<int> active;  // signed: +(i+1) lower, -(i+1) upper
  double kkt_residual = 0.0;  // |H u + g - N lambda|_inf / kkt_scale
  double max_violation = 0.0;
};

/**
 * Primal active-set solver for box and rate bounds. `warm` (may be empty)
 * seeds the start point and working set.
 */
QpResult qp_solve(const CondensedQp& qp, const Vector& u_prev,
                  const Vector& warm = {}, const QpOptions& opts = {});

/// max(1, |H|_inf |u|_inf, |g|_inf), the scale for stationarity tests.
double kkt_scale(const CondensedQp& qp, const Vector& u);

/// Largest violation of the box and rate rows.
double constraint_violation(const CondensedQp& qp, const Vector& u,
                            const Vector& u_prev);

struct KalmanState {
  Vector x_hat;
  Matrix p;
};

struct LinearSystem {
  Matrix a, b, c, d;
};

KalmanState kalman_measurement_update(const KalmanState& ks, const Vector& u,
                                      const Vector& y, const LinearSystem& sys,
                                      const Matrix& r_vv);
KalmanState kalman_time_update(const KalmanState& ks, const Vector& u,
                               const LinearSystem& sys, const Matrix& r_ww);
/// Measurement update followed by time update, both with input `u`.
KalmanState kalman_step(const KalmanState& ks, const Vector& u,
                        const Vector& y, const LinearSystem& sys,
                        const Matrix& r_ww, const Matrix& r_vv);

LinearSystem to_linear_system(const AugmentedDiscreteSystem& sys);

}  // namespace lqd
