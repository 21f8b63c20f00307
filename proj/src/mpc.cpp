#include "lqdelay/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Jacobi>

#include "lqdelay/ode_rhs.hpp"

namespace lqd {

InputBounds InputBounds::uniform(Eigen::Index n_u, double u_lim,
                                 double du_lim) {
  return {Vector::Constant(n_u, -u_lim), Vector::Constant(n_u, u_lim),
          Vector::Constant(n_u, -du_lim), Vector::Constant(n_u, du_lim)};
}

void InputBounds::validate(Eigen::Index n_u) const {
  if (u_min.size() != n_u || u_max.size() != n_u || du_min.size() != n_u ||
      du_max.size() != n_u) {
    throw std::invalid_argument("input bounds must have one entry per input");
  }
  for (Eigen::Index j = 0; j < n_u; ++j) {
    if (!(u_min(j) <= u_max(j))) {
      throw std::invalid_argument("infeasible bounds: u_min > u_max");
    }
    if (!(du_min(j) <= du_max(j))) {
      throw std::invalid_argument("infeasible bounds: du_min > du_max");
    }
  }
}

Condenser::Condenser(const Matrix& a, const Matrix& b, const Matrix& q, int n)
    : a_(a), b_(b), n_(n), n_x_(a.rows()), n_u_(b.cols()) {
  if (n < 1) throw std::invalid_argument("condense: horizon must be >= 1");
  if (a.cols() != n_x_ || b.rows() != n_x_ || q.rows() != n_x_ + n_u_ ||
      q.cols() != n_x_ + n_u_) {
    throw std::invalid_argument("condense: dimension mismatch");
  }
  const Eigen::Index nv = n * n_u_;
  const Eigen::Index nz = n_x_ + n_u_;
  h_ = Matrix::Zero(nv, nv);
  f_x_ = Matrix::Zero(nv, n_x_);
  s_t_.reserve(static_cast<std::size_t>(n));

  Matrix gamma = Matrix::Zero(n_x_, nv);
  Matrix a_pow = Matrix::Identity(n_x_, n_x_);
  Matrix s = Matrix::Zero(nz, nv);
  Matrix b0 = Matrix::Zero(nz, n_x_);
  for (int k = 0; k < n; ++k) {
    const Eigen::Index cols = (k + 1) * n_u_;
    s.setZero();
    s.topLeftCorner(n_x_, k * n_u_) = gamma.leftCols(k * n_u_);
    s.block(n_x_, k * n_u_, n_u_, n_u_).setIdentity();
    const Matrix qs = q * s.leftCols(cols);
    h_.topLeftCorner(cols, cols).noalias() += s.leftCols(cols).transpose() * qs;
    b0.topRows(n_x_) = a_pow;
    f_x_.topRows(cols).noalias() +=
        s.leftCols(cols).transpose() * (q * b0);
    s_t_.push_back(s.transpose());

    gamma.leftCols(cols) = a * gamma.leftCols(cols);
    gamma.middleCols(k * n_u_, n_u_) = b;
    a_pow = a * a_pow;
  }
  h_ = symmetrize(h_);
}

Vector Condenser::linear_term(const Vector& x0,
                              const std::vector<Vector>& q_k) const {
  if (x0.size() != n_x_) throw std::invalid_argument("condense: x0 size");
  if (!q_k.empty() && static_cast<int>(q_k.size()) != n_) {
    throw std::invalid_argument("condense: need one q_k per stage");
  }
  Vector g = f_x_ * x0;
  for (std::size_t k = 0; k < q_k.size(); ++k) {
    if (q_k[k].size() != n_x_ + n_u_) {
      throw std::invalid_argument("condense: q_k size");
    }
    g.noalias() += s_t_[k] * q_k[k];
  }
  return g;
}

Matrix Condenser::stage_sum(const Matrix& m) const {
  if (m.rows() != n_x_ + n_u_) throw std::invalid_argument("stage_sum: rows");
  Matrix out = Matrix::Zero(n_ * n_u_, m.cols());
  for (const auto& st : s_t_) out.noalias() += st * m;
  return out;
}

Vector Condenser::predict(const Vector& x0, const Vector& u) const {
  if (u.size() != n_ * n_u_ || x0.size() != n_x_) {
    throw std::invalid_argument("predict: dimension mismatch");
  }
  Vector out(n_ * n_x_);
  Vector x = x0;
  for (int k = 0; k < n_; ++k) {
    x = a_ * x + b_ * u.segment(k * n_u_, n_u_);
    out.segment(k * n_x_, n_x_) = x;
  }
  return out;
}

CondensedQp condense(const Matrix& a, const Matrix& b, const Matrix& q,
                     const std::vector<Vector>& q_k, const Vector& x0,
                     int n) {
  Condenser c(a, b, q, n);
  CondensedQp qp;
  qp.h = c.hessian();
  qp.g = c.linear_term(x0, q_k);
  qp.horizon = n;
  qp.n_u = b.cols();
  return qp;
}

bool regularize(Matrix& h) {
  const double lo =
      Eigen::SelfAdjointEigenSolver<Matrix>(h, Eigen::EigenvaluesOnly)
          .eigenvalues()
          .minCoeff();
  if (lo >= 1e-10) return false;
  h.diagonal().array() += 1e-9;
  return true;
}

namespace {

// Constraint id 2v is the box row on variable v, 2v+1 the rate row.
struct Rows {
  const CondensedQp& qp;
  const Vector& u_prev;
  Eigen::Index n_u;

  [[nodiscard]] Eigen::Index var(int id) const { return id / 2; }
  [[nodiscard]] bool is_rate(int id) const { return id % 2 == 1; }
  [[nodiscard]] Eigen::Index prev_var(int id) const {
    return is_rate(id) && var(id) >= n_u ? var(id) - n_u : -1;
  }
  [[nodiscard]] double lo(int id) const {
    const auto j = var(id) % n_u;
    if (!is_rate(id)) return qp.bounds.u_min(j);
    return qp.bounds.du_min(j) + (var(id) < n_u ? u_prev(j) : 0.0);
  }
  [[nodiscard]] double hi(int id) const {
    const auto j = var(id) % n_u;
    if (!is_rate(id)) return qp.bounds.u_max(j);
    return qp.bounds.du_max(j) + (var(id) < n_u ? u_prev(j) : 0.0);
  }
  [[nodiscard]] double dot(int id, const Vector& x) const {
    const auto pv = prev_var(id);
    return x(var(id)) - (pv >= 0 ? x(pv) : 0.0);
  }
  void add_normal(int id, double sign, Vector& out) const {
    out(var(id)) += sign;
    const auto pv = prev_var(id);
    if (pv >= 0) out(pv) -= sign;
  }
};

struct Active {
  int id;
  double sign;  // +1 lower bound, -1 upper bound
};

// Union-find over per-input chains: node N is the fixed ground.
class ChainForest {
 public:
  ChainForest(int n, Eigen::Index n_u)
      : n_(n), parent_(static_cast<std::size_t>((n + 1) * n_u)) {
    std::iota(parent_.begin(), parent_.end(), 0);
    n_u_ = n_u;
  }
  /// Adds the row unless it is linearly dependent on those already added.
  bool link(const Rows& rows, int id) {
    const auto [a, b] = ends(rows, id);
    if (a == b) return false;
    parent_[static_cast<std::size_t>(a)] = b;
    return true;
  }
  bool dependent(const Rows& rows, int id) {
    const auto [a, b] = ends(rows, id);
    return a == b;
  }

 private:
  std::pair<int, int> ends(const Rows& rows, int id) {
    const auto v = rows.var(id);
    const auto j = static_cast<int>(v % n_u_);
    const int k = static_cast<int>(v / n_u_);
    const int other = rows.prev_var(id) >= 0 ? k - 1 : n_;
    return {find(j * (n_ + 1) + k), find(j * (n_ + 1) + other)};
  }
  int find(int x) {
    while (parent_[static_cast<std::size_t>(x)] != x) {
      auto& p = parent_[static_cast<std::size_t>(x)];
      p = parent_[static_cast<std::size_t>(p)];
      x = p;
    }
    return x;
  }
  int n_;
  Eigen::Index n_u_;
  std::vector<int> parent_;
};

}  // namespace

double kkt_scale(const CondensedQp& qp, const Vector& u) {
  const double h_norm = qp.h.cwiseAbs().rowwise().sum().maxCoeff();
  return std::max({1.0, h_norm * u.lpNorm<Eigen::Infinity>(),
                   qp.g.lpNorm<Eigen::Infinity>()});
}

double constraint_violation(const CondensedQp& qp, const Vector& u,
                            const Vector& u_prev) {
  const Rows rows{qp, u_prev, qp.n_u};
  double worst = 0.0;
  const int n_rows = static_cast<int>(2 * u.size());
  for (int id = 0; id < n_rows; ++id) {
    const double v = rows.dot(id, u);
    worst = std::max({worst, rows.lo(id) - v, v - rows.hi(id)});
  }
  return worst;
}

namespace {

// Upper Cholesky factor R of the working-set Schur complement
// S = N' H^{-1} N, updated as rows enter and leave.
class WorkingFactor {
 public:
  bool add(const Vector& col, double diag) {
    const auto n = r_.rows();
    Vector v = col;
    if (n > 0) {
      r_.topLeftCorner(n, n).transpose().triangularView<Eigen::Lower>()
          .solveInPlace(v);
    }
    const double d2 = diag - v.squaredNorm();
    if (!(d2 > 1e-13 * diag)) return false;
    r_.conservativeResize(n + 1, n + 1);
    r_.col(n).head(n) = v;
    r_.row(n).head(n).setZero();
    r_(n, n) = std::sqrt(d2);
    return true;
  }
  void remove(Eigen::Index i) {
    const auto n = r_.rows();
    Matrix next(n, n - 1);
    next << r_.leftCols(i), r_.rightCols(n - 1 - i);
    for (Eigen::Index j = i; j + 1 < n; ++j) {
      Eigen::JacobiRotation<double> g;
      g.makeGivens(next(j, j), next(j + 1, j));
      next.bottomRightCorner(n - j, n - 1 - j)
          .applyOnTheLeft(0, 1, g.adjoint());
      next(j + 1, j) = 0.0;
    }
    r_ = next.topRows(n - 1);
  }
  [[nodiscard]] Vector solve(const Vector& b) const {
    Vector x = b;
    if (x.size() == 0) return x;
    r_.transpose().triangularView<Eigen::Lower>().solveInPlace(x);
    r_.triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
  }

 private:
  Matrix r_;
};

}  // namespace

Matrix spd_inverse(const Matrix& h) {
  const Eigen::LLT<Matrix> llt(h);
  if (llt.info() != Eigen::Success) {
    throw std::domain_error("qp_solve: Hessian is not positive definite");
  }
  return symmetrize(llt.solve(Matrix::Identity(h.rows(), h.cols())));
}

QpResult qp_solve(const CondensedQp& qp, const Vector& u_prev,
                  const Vector& warm, const QpOptions& opts) {
  const Eigen::Index nv = qp.g.size();
  if (qp.n_u <= 0 || qp.horizon * qp.n_u != nv || qp.h.rows() != nv ||
      qp.h.cols() != nv || u_prev.size() != qp.n_u) {
    throw std::invalid_argument("qp_solve: dimension mismatch");
  }
  qp.bounds.validate(qp.n_u);
  const Rows rows{qp, u_prev, qp.n_u};
  const int n_rows = static_cast<int>(2 * nv);

  Matrix local_inv;
  if (qp.h_inv.rows() != nv) local_inv = spd_inverse(qp.h);
  const Matrix& hinv = qp.h_inv.rows() == nv ? qp.h_inv : local_inv;
  const Vector x_unc = -(hinv * qp.g);

  // Feasible start: clamp the warm start (or zero) stage by stage.
  Vector x = warm.size() == nv ? warm : Vector::Zero(nv);
  const double feas_tol = 1e-12;
  for (Eigen::Index v = 0; v < nv; ++v) {
    const int box = static_cast<int>(2 * v), rate = box + 1;
    const double prev = rows.prev_var(rate) >= 0 ? x(rows.prev_var(rate)) : 0;
    const double lo = std::max(rows.lo(box), rows.lo(rate) + prev);
    const double hi = std::min(rows.hi(box), rows.hi(rate) + prev);
    if (lo > hi + feas_tol) {
      throw std::runtime_error("qp_solve: infeasible constraints at variable " +
                               std::to_string(v));
    }
    x(v) = std::clamp(x(v), lo, std::max(lo, hi));
  }

  std::vector<Active> work;
  std::vector<char> in_work(static_cast<std::size_t>(n_rows), 0);
  WorkingFactor factor;
  // n_a' H^{-1} n_b for rows with at most two unit entries.
  auto form = [&](const Active& a, const Active& b) {
    const Eigen::Index va[2] = {rows.var(a.id), rows.prev_var(a.id)};
    const Eigen::Index vb[2] = {rows.var(b.id), rows.prev_var(b.id)};
    double s = 0.0;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        if (va[i] < 0 || vb[j] < 0) continue;
        s += (i == 0 ? 1.0 : -1.0) * (j == 0 ? 1.0 : -1.0) * hinv(va[i], vb[j]);
      }
    }
    return a.sign * b.sign * s;
  };
  auto push = [&](const Active& a) {
    Vector col(static_cast<Eigen::Index>(work.size()));
    for (std::size_t i = 0; i < work.size(); ++i) {
      col(static_cast<Eigen::Index>(i)) = form(work[i], a);
    }
    if (!factor.add(col, form(a, a))) return false;
    work.push_back(a);
    in_work[static_cast<std::size_t>(a.id)] = 1;
    return true;
  };
  {
    ChainForest forest(qp.horizon, qp.n_u);
    for (int id = 0; id < n_rows; ++id) {
      const double v = rows.dot(id, x);
      const double tight = 1e-12 * std::max(1.0, std::abs(v));
      double sign = 0.0;
      if (std::abs(v - rows.lo(id)) <= tight) sign = 1.0;
      else if (std::abs(v - rows.hi(id)) <= tight) sign = -1.0;
      if (sign != 0.0 && !forest.dependent(rows, id)) {
        if (push({id, sign})) forest.link(rows, id);
      }
    }
  }

  const double lam_tol = opts.tolerance * kkt_scale(qp, x);
  QpResult res;
  Vector lambda;
  Vector t(nv);
  // After an unblocked step the iterate minimizes over the working set.
  bool full_step = false;
  for (int it = 0;; ++it) {
    if (it >= opts.max_iterations) {
      throw std::runtime_error("qp_solve: iteration cap reached");
    }
    res.iterations = it + 1;
    const auto nw = static_cast<Eigen::Index>(work.size());
    // H^{-1} (H x + g) = x - x_unc.
    const Vector d = x - x_unc;
    Vector rhs(nw);
    for (Eigen::Index i = 0; i < nw; ++i) {
      const auto& a = work[static_cast<std::size_t>(i)];
      rhs(i) = a.sign * rows.dot(a.id, d);
    }
    lambda = factor.solve(rhs);
    t.setZero();
    for (Eigen::Index i = 0; i < nw; ++i) {
      const auto& a = work[static_cast<std::size_t>(i)];
      rows.add_normal(a.id, a.sign * lambda(i), t);
    }
    const Vector p = hinv * t - d;

    // Stationarity is judged on H p, the residual of the current
    // equality-constrained step; p itself is noisy along weak directions.
    const double pnorm = p.lpNorm<Eigen::Infinity>();
    if (pnorm == 0.0 || full_step ||
        (qp.h * p).lpNorm<Eigen::Infinity>() <=
            opts.tolerance * kkt_scale(qp, x)) {
      Eigen::Index worst = -1;
      double worst_val = -lam_tol;
      for (Eigen::Index i = 0; i < nw; ++i) {
        if (lambda(i) < worst_val) {
          worst_val = lambda(i);
          worst = i;
        }
      }
      full_step = false;
      if (worst < 0) break;
      in_work[static_cast<std::size_t>(work[static_cast<std::size_t>(worst)].id)] = 0;
      work.erase(work.begin() + worst);
      factor.remove(worst);
      continue;
    }

    double alpha = 1.0;
    int block = -1;
    double block_sign = 0.0;
    const double eps = 1e-14 * pnorm;
    // Rows dependent on the working set are orthogonal to p in exact
    // arithmetic; letting them block would only add rounding noise.
    ChainForest forest(qp.horizon, qp.n_u);
    for (const auto& a : work) forest.link(rows, a.id);
    for (int id = 0; id < n_rows; ++id) {
      if (in_work[static_cast<std::size_t>(id)] || forest.dependent(rows, id)) {
        continue;
      }
      const double ap = rows.dot(id, p);
      if (ap < -eps) {
        const double step = std::max(0.0, (rows.lo(id) - rows.dot(id, x)) / ap);
        if (step < alpha) {
          alpha = step;
          block = id;
          block_sign = 1.0;
        }
      } else if (ap > eps) {
        const double step = std::max(0.0, (rows.hi(id) - rows.dot(id, x)) / ap);
        if (step < alpha) {
          alpha = step;
          block = id;
          block_sign = -1.0;
        }
      }
    }
    x += alpha * p;
    full_step = block < 0;
    if (block >= 0 && !push({block, block_sign})) {
      throw std::runtime_error("qp_solve: degenerate working set");
    }
  }

  res.u = x;
  Vector r = qp.h * x + qp.g;
  Vector normal(nv);
  for (std::size_t i = 0; i < work.size(); ++i) {
    normal.setZero();
    rows.add_normal(work[i].id, work[i].sign, normal);
    r -= lambda(static_cast<Eigen::Index>(i)) * normal;
    res.active.push_back(static_cast<int>(work[i].sign) * (work[i].id + 1));
  }
  res.kkt_residual = r.lpNorm<Eigen::Infinity>() / kkt_scale(qp, x);
  res.max_violation = std::max(0.0, constraint_violation(qp, x, u_prev));
  return res;
}

LinearSystem to_linear_system(const AugmentedDiscreteSystem& sys) {
  return {sys.a_tilde, sys.b_tilde, sys.c_tilde, sys.d_tilde};
}

KalmanState kalman_measurement_update(const KalmanState& ks, const Vector& u,
                                      const Vector& y, const LinearSystem& sys,
                                      const Matrix& r_vv) {
  const auto n = ks.x_hat.size();
  if (sys.c.cols() != n || ks.p.rows() != n || y.size() != sys.c.rows() ||
      r_vv.rows() != y.size() || u.size() != sys.d.cols()) {
    throw std::invalid_argument("kalman: dimension mismatch");
  }
  const Matrix pct = ks.p * sys.c.transpose();
  const Matrix s = symmetrize(sys.c * pct + r_vv);
  const Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success ||
      llt.matrixLLT().diagonal().minCoeff() <=
          1e-12 * std::sqrt(std::max(1.0, s.diagonal().maxCoeff()))) {
    throw std::domain_error("kalman: singular innovation covariance");
  }
  const Matrix k = llt.solve(pct.transpose()).transpose();
  KalmanState out;
  out.x_hat = ks.x_hat + k * (y - sys.c * ks.x_hat - sys.d * u);
  const Matrix ikc = Matrix::Identity(n, n) - k * sys.c;
  out.p = symmetrize(ikc * ks.p * ikc.transpose() + k * r_vv * k.transpose());
  return out;
}

KalmanState kalman_time_update(const KalmanState& ks, const Vector& u,
                               const LinearSystem& sys, const Matrix& r_ww) {
  if (sys.a.rows() != ks.x_hat.size() || r_ww.rows() != ks.x_hat.size() ||
      u.size() != sys.b.cols()) {
    throw std::invalid_argument("kalman: dimension mismatch");
  }
  return {sys.a * ks.x_hat + sys.b * u,
          symmetrize(sys.a * ks.p * sys.a.transpose() + r_ww)};
}

KalmanState kalman_step(const KalmanState& ks, const Vector& u,
                        const Vector& y, const LinearSystem& sys,
                        const Matrix& r_ww, const Matrix& r_vv) {
  return kalman_time_update(kalman_measurement_update(ks, u, y, sys, r_vv), u,
                            sys, r_ww);
}

}  // namespace lqd
