#include "lqdelay/solvers.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

#include <Eigen/LU>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

namespace lqd {

namespace {

using Clock = std::chrono::steady_clock;

// Solves X_i = I + h sum_j a_ij L X_j for i = 1..s.
std::vector<Matrix> stage_solve(const ButcherTableau& tab, double h,
                                const Matrix& l) {
  const auto s = tab.stages();
  const auto n = l.rows();
  std::vector<Matrix> x(static_cast<std::size_t>(s));
  if (tab.is_explicit()) {
    for (Eigen::Index i = 0; i < s; ++i) {
      Matrix acc = Matrix::Zero(n, n);
      for (Eigen::Index j = 0; j < i; ++j) {
        if (tab.a(i, j) != 0.0) acc += tab.a(i, j) * x[j];
      }
      x[i] = Matrix::Identity(n, n) + h * (l * acc);
    }
    return x;
  }
  // (I - h a (x) L) [X_1; ...; X_s] = [I; ...; I]
  const Matrix big = Matrix::Identity(s * n, s * n) -
                     h * Eigen::kroneckerProduct(tab.a, l).eval();
  Eigen::PartialPivLU<Matrix> lu(big);
  if (!(lu.rcond() > 1e-13)) {
    throw std::runtime_error("singular implicit stage system; reduce step size");
  }
  Matrix rhs(s * n, n);
  for (Eigen::Index i = 0; i < s; ++i) {
    rhs.middleRows(i * n, n).setIdentity();
  }
  const Matrix sol = lu.solve(rhs);
  for (Eigen::Index i = 0; i < s; ++i) x[i] = sol.middleRows(i * n, n);
  return x;
}

Matrix weighted_sum(const Eigen::VectorXd& w, const std::vector<Matrix>& xs) {
  Matrix acc = Matrix::Zero(xs.front().rows(), xs.front().cols());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (w(static_cast<Eigen::Index>(i)) != 0.0) {
      acc += w(static_cast<Eigen::Index>(i)) * xs[i];
    }
  }
  return acc;
}

void check_inputs(const StackedCoefficients& coeffs, const Matrix& q_c,
                  const Matrix& g_c, double ts) {
  if (!(ts > 0.0) || !std::isfinite(ts)) {
    throw std::invalid_argument("sample time must be positive");
  }
  if (q_c.rows() != coeffs.n_z || q_c.cols() != coeffs.n_z) {
    throw std::invalid_argument("Q_c must be n_z x n_z");
  }
  if (g_c.rows() != coeffs.n_x) {
    throw std::invalid_argument("G_c rows must equal the stacked state size");
  }
}

// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_legendre(int n) {
  Eigen::VectorXd x(n), w(n);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x(i) = z;
    w(i) = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

// R_ww(t) = int_0^t e^{A s} R e^{A' s} ds from one Van Loan exponential.
Matrix covariance_integral(const Matrix& a_c, const Matrix& r_bar, double t) {
  const auto n = a_c.rows();
  Matrix f = Matrix::Zero(2 * n, 2 * n);
  f.topLeftCorner(n, n) = -a_c;
  f.topRightCorner(n, n) = r_bar;
  f.bottomRightCorner(n, n) = a_c.transpose();
  const Matrix phi = expm(f * t);
  return symmetrize(phi.bottomRightCorner(n, n).transpose() *
                    phi.topRightCorner(n, n));
}

void finalize(DiscretizationResult& r) {
  r.q = symmetrize(r.q);
  r.r_ww = symmetrize(r.r_ww);
  if (!r.a.allFinite() || !r.b_o.allFinite() || !r.q.allFinite() ||
      !r.m.allFinite() || !r.r_ww.allFinite() || !std::isfinite(r.rho_w)) {
    throw std::domain_error("discretization produced nonfinite values");
  }
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::FixedStep:
      return "ode";
    case Method::MatrixExp:
      return "expm";
    case Method::StepDoubling:
      return "doubling";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  if (s == "ode" || s == "fixed_step") return Method::FixedStep;
  if (s == "expm" || s == "matrix_exp") return Method::MatrixExp;
  if (s == "doubling" || s == "step_doubling") return Method::StepDoubling;
  throw std::invalid_argument("unknown method '" + s + "'");
}

Matrix expm(const Matrix& x) {
  if (x.rows() != x.cols()) throw std::invalid_argument("expm: not square");
  if (!x.allFinite()) throw std::domain_error("expm: nonfinite entries");
  if (x.size() == 0) return x;
  return x.exp();
}

StageCoefficients stage_coefficients(const ButcherTableau& tab, double h,
                                     const Matrix& a_c, const Matrix& v_a_c,
                                     const Matrix& h_c) {
  tab.validate();
  if (!(h > 0.0)) throw std::invalid_argument("step size must be positive");
  const auto n = a_c.rows();
  const auto s = tab.stages();

  StageCoefficients sc;
  sc.lambda_i = stage_solve(tab, h, a_c);
  sc.lambda_v_i = stage_solve(tab, h, v_a_c);
  sc.theta_1_i.resize(static_cast<std::size_t>(s));
  sc.theta_2_i.resize(static_cast<std::size_t>(s));
  for (Eigen::Index i = 0; i < s; ++i) {
    sc.theta_1_i[i] = weighted_sum(tab.a.row(i).transpose(), sc.lambda_i);
    sc.theta_2_i[i] = weighted_sum(tab.a.row(i).transpose(), sc.lambda_v_i);
  }
  sc.theta_1 = weighted_sum(tab.b, sc.lambda_i);
  sc.theta_2 = weighted_sum(tab.b, sc.lambda_v_i);
  sc.lambda = Matrix::Identity(n, n) + h * a_c * sc.theta_1;
  sc.lambda_v = Matrix::Identity(n, n) + h * v_a_c * sc.theta_2;
  if (h_c.size() > 0) {
    sc.omega_i = stage_solve(tab, h, h_c);
    sc.omega = Matrix::Identity(h_c.rows(), h_c.rows()) +
               h * h_c * weighted_sum(tab.b, sc.omega_i);
  }
  return sc;
}

DiscretizationResult solve_fixed_step(const StackedCoefficients& coeffs,
                                      const Matrix& q_c, const Matrix& g_c,
                                      double ts, long long n,
                                      const ButcherTableau& tab) {
  if (n <= 0) throw std::invalid_argument("fixed-step count must be >= 1");
  check_inputs(coeffs, q_c, g_c, ts);
  const auto start = Clock::now();

  const double h = ts / static_cast<double>(n);
  const auto n_x = coeffs.n_x;
  const auto n_ext = coeffs.extended_inputs();
  const auto n_g = n_x + n_ext;
  const auto s = tab.stages();
  const Matrix v_a = coeffs.v_mat * coeffs.a_c;
  const auto sc = stage_coefficients(tab, h, coeffs.a_c, v_a, Matrix());

  const Matrix b1_bar = h * coeffs.b_1c;
  const Matrix b2_bar = h * coeffs.b_bar_2c;
  const Matrix r_bar = g_c * g_c.transpose();
  const Matrix q_c_ww = coeffs.c_c.transpose() * q_c * coeffs.c_c;
  Matrix cd(coeffs.n_z, n_g);
  cd << coeffs.c_c, coeffs.d_o;
  // Gamma_{k,i} = [C, D_o][A_ki, B_o,ki; 0, I] = [C A_ki, C B_o,ki + D_o]
  const Matrix& c = coeffs.c_c;

  Matrix a_k = Matrix::Identity(n_x, n_x);
  Matrix a_v_k = Matrix::Identity(n_x, n_x);
  Matrix b1_k = Matrix::Zero(n_x, n_ext);
  Matrix b2_k = Matrix::Zero(n_x, n_ext);
  Matrix q_k = Matrix::Zero(n_g, n_g);
  Matrix m_k = Matrix::Zero(n_g, coeffs.n_z);
  Matrix r_k = Matrix::Zero(n_x, n_x);
  double rho_k = 0.0;

  Matrix gamma(coeffs.n_z, n_g);
  std::vector<double> stage_tr(static_cast<std::size_t>(s));
  for (long long k = 0; k < n; ++k) {
    const Matrix a_b1 = a_k * b1_bar;
    const Matrix av_b2 = a_v_k * b2_bar;
    Matrix dq = Matrix::Zero(n_g, n_g);
    Matrix dm = Matrix::Zero(n_g, coeffs.n_z);
    Matrix dr = Matrix::Zero(n_x, n_x);
    for (Eigen::Index i = 0; i < s; ++i) {
      const Matrix a_ki = sc.lambda_i[i] * a_k;
      const Matrix b_o_ki =
          b1_k + b2_k + sc.theta_1_i[i] * a_b1 + sc.theta_2_i[i] * av_b2;
      gamma.leftCols(n_x).noalias() = c * a_ki;
      gamma.rightCols(n_ext) = coeffs.d_o;
      gamma.rightCols(n_ext).noalias() += c * b_o_ki;
      const Matrix phi = a_ki * g_c;
      const Matrix p_i = phi * phi.transpose();
      stage_tr[i] = (q_c_ww * p_i).trace();
      const double w = tab.b(i);
      if (w == 0.0) continue;
      const Matrix qg = q_c * gamma;
      dq.noalias() += w * gamma.transpose() * qg;
      dm.noalias() -= w * gamma.transpose() * q_c;
      dr += w * p_i;
    }
    // rho_w stage values use R_ww at the stages, R_k + h sum_j a_ij P_j.
    const double tr_r = (q_c_ww * r_k).trace();
    double drho = 0.0;
    for (Eigen::Index i = 0; i < s; ++i) {
      double stage = tr_r;
      for (Eigen::Index j = 0; j < s; ++j) {
        if (tab.a(i, j) != 0.0) stage += h * tab.a(i, j) * stage_tr[j];
      }
      drho += tab.b(i) * stage;
    }

    q_k = symmetrize(q_k + h * dq);
    m_k += h * dm;
    r_k = symmetrize(r_k + h * dr);
    rho_k += h * drho;
    b1_k += sc.theta_1 * a_b1;
    b2_k += sc.theta_2 * av_b2;
    a_k = sc.lambda * a_k;
    a_v_k = sc.lambda_v * a_v_k;
  }
  (void)r_bar;

  DiscretizationResult out;
  out.a = a_k;
  out.b_o = b1_k + b2_k;
  out.q = q_k;
  out.m = m_k;
  out.r_ww = r_k;
  out.gamma = transition_block(out.a, out.b_o);
  out.rho_w = rho_k;
  out.method = Method::FixedStep;
  out.n_steps = n;
  finalize(out);
  out.wall_time = Clock::now() - start;
  return out;
}

DiscretizationResult solve_matrix_exp(const StackedCoefficients& coeffs,
                                      const Matrix& q_c, const Matrix& g_c,
                                      double ts) {
  check_inputs(coeffs, q_c, g_c, ts);
  const auto start = Clock::now();
  const auto bd = build_blocks(coeffs, q_c, g_c);
  const auto n_x = coeffs.n_x;
  const auto n_g = bd.n_g;
  const auto n3 = 3 * n_g;

  Matrix f1 = Matrix::Zero(2 * n3, 2 * n3);
  f1.topLeftCorner(n3, n3) = -bd.h_c.transpose();
  f1.topRightCorner(n3, n3) = bd.e_1.transpose() * bd.q_bar_c * bd.e_1;
  f1.bottomRightCorner(n3, n3) = bd.h_c;
  const Matrix phi1 = expm(f1 * ts);
  const Matrix phi1_12 = phi1.topRightCorner(n3, n3);
  const Matrix phi1_22 = phi1.bottomRightCorner(n3, n3);

  Matrix f2 = Matrix::Zero(2 * n3, 2 * n3);
  f2.topRightCorner(n3, n3).setIdentity();
  f2.bottomRightCorner(n3, n3) = bd.h_c.transpose();
  const Matrix phi2_12 = expm(f2 * ts).topRightCorner(n3, n3);

  DiscretizationResult out;
  out.gamma = bd.e_1 * phi1_22 * bd.e_2;
  out.a = out.gamma.topLeftCorner(n_x, n_x);
  out.b_o = out.gamma.topRightCorner(n_x, n_g - n_x);
  out.q = bd.e_2.transpose() * phi1_22.transpose() * phi1_12 * bd.e_2;
  out.m = bd.e_2.transpose() * phi2_12 * bd.e_1.transpose() * bd.m_bar_c;
  out.r_ww = covariance_integral(coeffs.a_c, bd.r_bar_wwc, ts);

  // rho_w = int_0^ts tr(Q_c,ww R_ww(t)) dt by 10-point Gauss-Legendre.
  const auto [nodes, weights] = gauss_legendre(10);
  double rho = 0.0;
  if (bd.r_bar_wwc.squaredNorm() > 0.0 && bd.q_c_ww.squaredNorm() > 0.0) {
    for (Eigen::Index i = 0; i < nodes.size(); ++i) {
      const double t = 0.5 * ts * (nodes(i) + 1.0);
      rho += weights(i) *
             (bd.q_c_ww * covariance_integral(coeffs.a_c, bd.r_bar_wwc, t))
                 .trace();
    }
    rho *= 0.5 * ts;
  }
  out.rho_w = rho;
  out.method = Method::MatrixExp;
  out.n_steps = 1;
  finalize(out);
  out.wall_time = Clock::now() - start;
  return out;
}

DiscretizationResult solve_step_doubling(const StackedCoefficients& coeffs,
                                         const Matrix& q_c, const Matrix& g_c,
                                         double ts, int j,
                                         const ButcherTableau& tab) {
  if (j < 0 || j > 62) {
    throw std::invalid_argument("step-doubling exponent must be in [0, 62]");
  }
  check_inputs(coeffs, q_c, g_c, ts);
  const auto start = Clock::now();

  const long long n_steps = 1LL << j;
  const double h = ts / static_cast<double>(n_steps);
  const auto bd = build_blocks(coeffs, q_c, g_c);
  const auto n_x = coeffs.n_x;
  const auto n_g = bd.n_g;
  const auto n3 = 3 * n_g;
  const auto s = tab.stages();
  const Matrix v_a = coeffs.v_mat * coeffs.a_c;
  const auto sc = stage_coefficients(tab, h, coeffs.a_c, v_a, bd.h_c);

  Matrix lambda_bar = Matrix::Zero(2 * n_x, 2 * n_x);
  lambda_bar.topLeftCorner(n_x, n_x) = sc.lambda;
  lambda_bar.bottomRightCorner(n_x, n_x) = sc.lambda_v;
  Matrix theta_o(n_x, 2 * n_x);
  theta_o << sc.theta_1, sc.theta_2;
  Matrix b_oc(2 * n_x, coeffs.extended_inputs());
  b_oc << h * coeffs.b_1c, h * coeffs.b_bar_2c;

  const Matrix e1_q_e1 = bd.e_1.transpose() * bd.q_bar_c * bd.e_1;
  const Matrix e1_m = bd.e_1.transpose() * bd.m_bar_c;
  Matrix q_tilde_c = Matrix::Zero(n3, n3);
  Matrix m_tilde_c = Matrix::Zero(n3, coeffs.n_z);
  for (Eigen::Index i = 0; i < s; ++i) {
    if (tab.b(i) == 0.0) continue;
    const Matrix& om = sc.omega_i[i];
    q_tilde_c.noalias() += (h * tab.b(i)) * om.transpose() * e1_q_e1 * om;
    m_tilde_c.noalias() += (h * tab.b(i)) * om.transpose() * e1_m;
  }

  Matrix a_t = lambda_bar;                      // Lambda_bar^n
  Matrix b_t = Matrix::Identity(2 * n_x, 2 * n_x);  // sum_{k<n} Lambda_bar^k
  Matrix h_t = sc.omega;                        // Omega^n
  Matrix m_t = Matrix::Identity(n3, n3);        // sum_{k<n} Omega^k
  Matrix q_t = q_tilde_c;
  Matrix r_t = bd.r_bar_wwc;                    // sum_{k<n} L^k R L^k'
  Matrix u_t = Matrix::Zero(n_x, n_x);          // sum_{k<n} r_t(k)
  double n_cur = 1.0;

  for (int pass = 0; pass < j; ++pass) {
    const Matrix lam_n = a_t.topLeftCorner(n_x, n_x);
    u_t = symmetrize(u_t + n_cur * r_t + lam_n * u_t * lam_n.transpose());
    r_t = symmetrize(r_t + lam_n * r_t * lam_n.transpose());
    q_t = symmetrize(q_t + h_t.transpose() * q_t * h_t);
    m_t = m_t + m_t * h_t;
    b_t = b_t + b_t * a_t;
    a_t = a_t * a_t;
    h_t = h_t * h_t;
    n_cur *= 2.0;
  }

  DiscretizationResult out;
  out.a = a_t.topLeftCorner(n_x, n_x);
  out.b_o = theta_o * b_t * b_oc;
  out.q = bd.e_2.transpose() * q_t * bd.e_2;
  out.m = bd.e_2.transpose() * m_t.transpose() * m_tilde_c;
  out.r_ww = Matrix::Zero(n_x, n_x);
  double rho = 0.0;
  for (Eigen::Index i = 0; i < s; ++i) {
    const Matrix& li = sc.lambda_i[i];
    double a_col = 0.0;  // sum_r b_r a_ri
    for (Eigen::Index r = 0; r < s; ++r) a_col += tab.b(r) * tab.a(r, i);
    const Matrix lr = li * r_t * li.transpose();
    out.r_ww += (h * tab.b(i)) * lr;
    rho += h * h * tab.b(i) * (bd.q_c_ww * li * u_t * li.transpose()).trace();
    rho += h * h * a_col * (bd.q_c_ww * lr).trace();
  }
  out.gamma = transition_block(out.a, out.b_o);
  out.rho_w = rho;
  out.method = Method::StepDoubling;
  out.n_steps = n_steps;
  finalize(out);
  out.wall_time = Clock::now() - start;
  return out;
}

DiscretizationResult solve(const StackedCoefficients& coeffs, const Matrix& q_c,
                           const Matrix& g_c, double ts,
                           const SolverOptions& opts) {
  switch (opts.method) {
    case Method::FixedStep:
      return solve_fixed_step(coeffs, q_c, g_c, ts, opts.n, opts.tableau);
    case Method::MatrixExp:
      return solve_matrix_exp(coeffs, q_c, g_c, ts);
    case Method::StepDoubling:
      return solve_step_doubling(coeffs, q_c, g_c, ts, opts.j, opts.tableau);
  }
  throw std::invalid_argument("unknown method");
}

double inf_norm(const Matrix& x) {
  if (x.size() == 0) return 0.0;
  return x.cwiseAbs().rowwise().sum().maxCoeff();
}

double relative_difference(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw std::invalid_argument("relative_difference: dimension mismatch");
  }
  if (x.size() == 0) return 0.0;
  const double scale = y.cwiseAbs().maxCoeff();
  return (x - y).cwiseAbs().maxCoeff() / (scale > 0.0 ? scale : 1.0);
}

MethodErrors errors_against(const DiscretizationResult& x,
                            const DiscretizationResult& ref) {
  return {inf_norm(x.a - ref.a), inf_norm(x.b_o - ref.b_o),
          inf_norm(x.r_ww - ref.r_ww), inf_norm(x.m - ref.m),
          inf_norm(x.q - ref.q)};
}

}  // namespace lqd
