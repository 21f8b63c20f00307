#include "lqdelay/ode_rhs.hpp"

#include <stdexcept>

namespace lqd {

namespace {

void check_weight(const StackedCoefficients& sc, const Matrix& q_c,
                  const Matrix& g_c) {
  if (q_c.rows() != sc.n_z || q_c.cols() != sc.n_z) {
    throw std::invalid_argument("Q_c must be n_z x n_z");
  }
  if (g_c.rows() != sc.n_x) {
    throw std::invalid_argument("G_c rows must equal the stacked state size");
  }
}

}  // namespace

LqOdeState LqOdeState::initial(const StackedCoefficients& sc) {
  const auto n_g = sc.n_x + sc.extended_inputs();
  LqOdeState s;
  s.a_t = Matrix::Identity(sc.n_x, sc.n_x);
  s.a_v_t = Matrix::Identity(sc.n_x, sc.n_x);
  s.b1_t = Matrix::Zero(sc.n_x, sc.extended_inputs());
  s.b2_t = Matrix::Zero(sc.n_x, sc.extended_inputs());
  s.q_t = Matrix::Zero(n_g, n_g);
  s.m_t = Matrix::Zero(n_g, sc.n_z);
  s.r_ww_t = Matrix::Zero(sc.n_x, sc.n_x);
  return s;
}

LqOdeState& LqOdeState::operator+=(const LqOdeState& o) {
  a_t += o.a_t;
  a_v_t += o.a_v_t;
  b1_t += o.b1_t;
  b2_t += o.b2_t;
  q_t += o.q_t;
  m_t += o.m_t;
  r_ww_t += o.r_ww_t;
  rho_w_t += o.rho_w_t;
  return *this;
}

LqOdeState& LqOdeState::operator*=(double s) {
  a_t *= s;
  a_v_t *= s;
  b1_t *= s;
  b2_t *= s;
  q_t *= s;
  m_t *= s;
  r_ww_t *= s;
  rho_w_t *= s;
  return *this;
}

LqOdeState operator+(LqOdeState a, const LqOdeState& b) { return a += b; }
LqOdeState operator*(double s, LqOdeState a) { return a *= s; }

Matrix transition_block(const Matrix& a_t, const Matrix& b_o_t) {
  const auto n_x = a_t.rows();
  const auto n_ext = b_o_t.cols();
  if (a_t.cols() != n_x || b_o_t.rows() != n_x) {
    throw std::invalid_argument("transition_block: dimension mismatch");
  }
  Matrix t = Matrix::Zero(n_x + n_ext, n_x + n_ext);
  t.topLeftCorner(n_x, n_x) = a_t;
  t.topRightCorner(n_x, n_ext) = b_o_t;
  t.bottomRightCorner(n_ext, n_ext).setIdentity();
  return t;
}

Matrix gamma_eval(const Matrix& a_t, const Matrix& b_o_t, const Matrix& c_c,
                  const Matrix& d_o) {
  if (c_c.cols() != a_t.rows() || d_o.cols() != b_o_t.cols() ||
      c_c.rows() != d_o.rows()) {
    throw std::invalid_argument("gamma_eval: dimension mismatch");
  }
  Matrix cd(c_c.rows(), c_c.cols() + d_o.cols());
  cd << c_c, d_o;
  return cd * transition_block(a_t, b_o_t);
}

LqOdeState rhs_full(double /*t*/, const LqOdeState& s,
                    const StackedCoefficients& coeffs, const Matrix& q_c,
                    const Matrix& g_c) {
  check_weight(coeffs, q_c, g_c);
  if (s.a_t.rows() != coeffs.n_x || s.b1_t.cols() != coeffs.extended_inputs()) {
    throw std::invalid_argument("rhs_full: state dimensions do not match");
  }
  if (!s.a_t.allFinite() || !s.a_v_t.allFinite() || !s.b1_t.allFinite() ||
      !s.b2_t.allFinite() || !s.r_ww_t.allFinite()) {
    throw std::domain_error("rhs_full: nonfinite state");
  }
  const Matrix gamma = gamma_eval(s.a_t, s.b_o(), coeffs.c_c, coeffs.d_o);
  const Matrix phi = s.a_t * g_c;
  const Matrix q_c_ww = coeffs.c_c.transpose() * q_c * coeffs.c_c;

  LqOdeState d;
  d.a_t = coeffs.a_c * s.a_t;
  d.a_v_t = coeffs.v_mat * coeffs.a_c * s.a_v_t;
  d.b1_t = s.a_t * coeffs.b_1c;
  d.b2_t = s.a_v_t * coeffs.b_bar_2c;
  d.q_t = gamma.transpose() * q_c * gamma;
  d.m_t = -gamma.transpose() * q_c;
  d.r_ww_t = phi * phi.transpose();
  d.rho_w_t = (q_c_ww * s.r_ww_t).trace();
  return d;
}

BlockDecomposition build_blocks(const StackedCoefficients& coeffs,
                                const Matrix& q_c, const Matrix& g_c) {
  check_weight(coeffs, q_c, g_c);
  const auto n_x = coeffs.n_x;
  const auto n_ext = coeffs.extended_inputs();
  const auto n_g = n_x + n_ext;

  BlockDecomposition bd;
  bd.n_g = n_g;
  bd.h_c = Matrix::Zero(3 * n_g, 3 * n_g);
  const Matrix v_a = coeffs.v_mat * coeffs.a_c;
  bd.h_c.block(0, 0, n_x, n_x) = coeffs.a_c;
  bd.h_c.block(0, n_x, n_x, n_ext) = coeffs.b_1c;
  bd.h_c.block(n_g, n_g, n_x, n_x) = v_a;
  bd.h_c.block(n_g, n_g + n_x, n_x, n_ext) = coeffs.b_bar_2c;
  bd.h_c.block(2 * n_g, 2 * n_g, n_x, n_x) = v_a;

  const Matrix id = Matrix::Identity(n_g, n_g);
  bd.e_1.resize(n_g, 3 * n_g);
  bd.e_1 << id, id, -id;
  bd.e_2.resize(3 * n_g, n_g);
  bd.e_2 << id, id, id;

  Matrix cd(coeffs.n_z, n_g);
  cd << coeffs.c_c, coeffs.d_o;
  bd.q_bar_c = cd.transpose() * q_c * cd;
  bd.m_bar_c = -cd.transpose() * q_c;
  bd.r_bar_wwc = g_c * g_c.transpose();
  bd.q_c_ww = coeffs.c_c.transpose() * q_c * coeffs.c_c;
  return bd;
}

LqOdeState integrate_direct(const StackedCoefficients& coeffs,
                            const Matrix& q_c, const Matrix& g_c, double t_end,
                            int steps) {
  if (steps < 1) throw std::invalid_argument("integrate_direct: steps < 1");
  const double h = t_end / steps;
  LqOdeState s = LqOdeState::initial(coeffs);
  for (int k = 0; k < steps; ++k) {
    const double t = k * h;
    const auto k1 = rhs_full(t, s, coeffs, q_c, g_c);
    const auto k2 = rhs_full(t + 0.5 * h, s + (0.5 * h) * k1, coeffs, q_c, g_c);
    const auto k3 = rhs_full(t + 0.5 * h, s + (0.5 * h) * k2, coeffs, q_c, g_c);
    const auto k4 = rhs_full(t + h, s + h * k3, coeffs, q_c, g_c);
    s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    s.q_t = symmetrize(s.q_t);
    s.r_ww_t = symmetrize(s.r_ww_t);
  }
  return s;
}

}  // namespace lqd
