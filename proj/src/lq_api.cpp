#include "lqdelay/lq_api.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace lqd {

namespace {

bool is_symmetric(const Matrix& x, double tol) {
  if (x.rows() != x.cols()) return false;
  const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
  return (x - x.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

}  // namespace

void ContinuousLqProblem::validate() const {
  system.validate();
  const auto n_z = system.outputs();
  if (q_c.rows() != n_z || q_c.cols() != n_z) {
    throw std::invalid_argument("Q_c must be n_z x n_z");
  }
  if (!is_symmetric(q_c, 1e-12)) {
    throw std::invalid_argument("Q_c must be symmetric");
  }
  if (Eigen::SelfAdjointEigenSolver<Matrix>(q_c).eigenvalues().minCoeff() <
      -1e-12 * std::max(1.0, q_c.norm())) {
    throw std::invalid_argument("Q_c must be positive semidefinite");
  }
  if (horizon_steps < 1) {
    throw std::invalid_argument("horizon must be at least one step");
  }
  if (references.rows() != n_z || references.cols() != horizon_steps) {
    throw std::invalid_argument(
        "reference trajectory must have n_z rows and N columns");
  }
}

std::pair<Vector, double> affine_terms(const Matrix& m, const Vector& z_bar,
                                       const Matrix& q_c, double ts) {
  if (m.cols() != z_bar.size() || q_c.rows() != z_bar.size() ||
      q_c.cols() != z_bar.size()) {
    throw std::invalid_argument("affine_terms: dimension mismatch");
  }
  return {m * z_bar, 0.5 * z_bar.dot(q_c * z_bar) * ts};
}

std::vector<Matrix> propagate_covariance(const Matrix& p0, const Matrix& a,
                                         const Matrix& r_ww, int n) {
  if (n < 0) throw std::invalid_argument("propagate_covariance: n < 0");
  if (a.rows() != a.cols() || p0.rows() != a.rows() ||
      r_ww.rows() != a.rows()) {
    throw std::invalid_argument("propagate_covariance: dimension mismatch");
  }
  if (!is_symmetric(p0, 1e-10) || !is_symmetric(r_ww, 1e-10)) {
    throw std::invalid_argument("propagate_covariance: asymmetric input");
  }
  std::vector<Matrix> p;
  p.reserve(static_cast<std::size_t>(n) + 1);
  p.push_back(symmetrize(p0));
  for (int k = 0; k < n; ++k) {
    p.push_back(symmetrize(a * p.back() * a.transpose() + r_ww));
  }
  return p;
}

Matrix pad_covariance(const Matrix& p, Eigen::Index dim) {
  if (p.rows() > dim || p.rows() != p.cols()) {
    throw std::invalid_argument("pad_covariance: dimension mismatch");
  }
  Matrix out = Matrix::Zero(dim, dim);
  out.topLeftCorner(p.rows(), p.cols()) = p;
  return out;
}

double stochastic_offset(const Matrix& q, const Matrix& p_bar_k, double rho_w) {
  if (q.rows() != p_bar_k.rows() || q.cols() != p_bar_k.cols()) {
    throw std::invalid_argument("stochastic_offset: dimension mismatch");
  }
  return 0.5 * ((q * p_bar_k).trace() + rho_w);
}

DiscreteLqProblem discretize(const ContinuousLqProblem& p,
                             const SolverOptions& opts, bool stochastic) {
  p.validate();
  DiscreteLqProblem out;
  out.coeffs = stack_mimo(p.system);
  const auto& sc = out.coeffs;
  const double ts = p.system.sample_time;
  out.disc = solve(sc, p.q_c, sc.g_c, ts, opts);
  out.sys = augment_discrete(out.disc.a, out.disc.b_o, sc.d_o, sc.c_c,
                             sc.m_bar, sc.n_u);
  // [x; u_{k-mbar}; ...; u_{k-1}; u_k] is already [x~; u].
  out.q = out.disc.q;
  out.m = out.disc.m;
  for (int k = 0; k < p.horizon_steps; ++k) {
    auto [qk, rk] = affine_terms(out.m, p.references.col(k), p.q_c, ts);
    out.q_k.push_back(std::move(qk));
    out.rho_k.push_back(rk);
  }
  if (!stochastic) return out;

  out.stochastic = true;
  out.r_ww = out.disc.r_ww;
  out.rho_w = out.disc.rho_w;
  const Matrix p0 = p.p0.size() > 0 ? p.p0 : Matrix::Zero(sc.n_x, sc.n_x);
  out.p_k = propagate_covariance(p0, out.disc.a, out.r_ww, p.horizon_steps);
  const auto dim = out.q.rows();
  for (int k = 0; k < p.horizon_steps; ++k) {
    out.rho_s_k.push_back(
        stochastic_offset(out.q, pad_covariance(out.p_k[k], dim), out.rho_w));
  }
  return out;
}

double DiscreteLqProblem::objective(const Vector& x_tilde0,
                                    const Matrix& u_seq) const {
  const auto n = static_cast<Eigen::Index>(q_k.size());
  if (u_seq.cols() != n || u_seq.rows() != sys.n_u ||
      x_tilde0.size() != sys.states()) {
    throw std::invalid_argument("objective: dimension mismatch");
  }
  Vector x = x_tilde0;
  Vector xu(sys.states() + sys.n_u);
  double psi = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    xu << x, u_seq.col(k);
    psi += 0.5 * xu.dot(q * xu) + q_k[k].dot(xu) + rho_k[k];
    if (stochastic) psi += rho_s_k[k];
    x = sys.a_tilde * x + sys.b_tilde * u_seq.col(k);
  }
  return psi;
}

}  // namespace lqd
