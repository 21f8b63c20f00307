#pragma once

#include "lqdelay/delay_model.hpp"

namespace lqd {

/**
 * State of the matrix ODE system whose value at t = ts gives the discrete
 * LQ data: A(t), A_v(t), B_1(t), B_2(t), Q(t), M(t), R_ww(t) and the scalar
 * rho_w(t) = int_0^t tr(C' Q_c C R_ww(s)) ds.
 *
 * Q is (n_x + n_ext) square over [x; u~], M is (n_x + n_ext) x n_z.
 */
struct LqOdeState {
  Matrix a_t;
  Matrix a_v_t;
  Matrix b1_t;
  Matrix b2_t;
  Matrix q_t;
  Matrix m_t;
  Matrix r_ww_t;
  double rho_w_t = 0.0;

  static LqOdeState initial(const StackedCoefficients& sc);

  [[nodiscard]] Matrix b_o() const { return b1_t + b2_t; }

  LqOdeState& operator+=(const LqOdeState& o);
  LqOdeState& operator*=(double s);
};

LqOdeState operator+(LqOdeState a, const LqOdeState& b);
LqOdeState operator*(double s, LqOdeState a);

/// Gamma(t) = E_1 H(t) E_2, the three-way split of the augmented
/// transition [A, B_o; 0, I] into exponentials of constant matrices.
struct BlockDecomposition {
  Matrix h_c;        // diag(H_1c, H_2c, H_3c)
  Matrix e_1;        // [I, I, -I]
  Matrix e_2;        // [I; I; I]
  Matrix q_bar_c;    // [C, D_o]' Q_c [C, D_o]
  Matrix m_bar_c;    // -[C, D_o]' Q_c
  Matrix r_bar_wwc;  // G_c G_c'
  Matrix q_c_ww;     // C' Q_c C
  Eigen::Index n_g = 0;
};

/// [A, B_o; 0, I].
Matrix transition_block(const Matrix& a_t, const Matrix& b_o_t);

/// [C_c, D_o] [A, B_o; 0, I], the map from [x_k; u~_k] to z(t).
Matrix gamma_eval(const Matrix& a_t, const Matrix& b_o_t, const Matrix& c_c,
                  const Matrix& d_o);

LqOdeState rhs_full(double t, const LqOdeState& s,
                    const StackedCoefficients& coeffs, const Matrix& q_c,
                    const Matrix& g_c);

BlockDecomposition build_blocks(const StackedCoefficients& coeffs,
                                const Matrix& q_c, const Matrix& g_c);

/// Classic RK4 applied directly to rhs_full, no precomputed coefficients.
/// Slow; intended as an independent reference.
LqOdeState integrate_direct(const StackedCoefficients& coeffs,
                            const Matrix& q_c, const Matrix& g_c, double t_end,
                            int steps);

/// (X + X') / 2
inline Matrix symmetrize(const Matrix& x) { return 0.5 * (x + x.transpose()); }

}  // namespace lqd
