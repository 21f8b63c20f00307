#include "lqdelay/delay_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lqd {

namespace {

std::string channel_name(std::size_t i, std::size_t j) {
  return "channel (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")";
}

// RK4 for x' = a x + b u with u held constant, n steps of size h.
void rk4_constant_input(const Matrix& a, const Vector& bu, double h, int n,
                        Vector& x) {
  for (int s = 0; s < n; ++s) {
    const Vector k1 = a * x + bu;
    const Vector k2 = a * (x + 0.5 * h * k1) + bu;
    const Vector k3 = a * (x + 0.5 * h * k2) + bu;
    const Vector k4 = a * (x + h * k3) + bu;
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
}

}  // namespace

void SisoDelayChannel::validate() const {
  const auto n = a_c.rows();
  if (a_c.cols() != n || b_c.rows() != n || b_c.cols() != 1 ||
      c_c.rows() != 1 || c_c.cols() != n) {
    throw std::invalid_argument("inconsistent SISO channel dimensions");
  }
  if (!std::isfinite(tau) || tau < 0.0) {
    throw std::invalid_argument("channel delay must be finite and >= 0");
  }
  if (!a_c.allFinite() || !b_c.allFinite() || !c_c.allFinite() ||
      !std::isfinite(d_c)) {
    throw std::invalid_argument("channel coefficients must be finite");
  }
}

void MimoDelaySystem::validate() const {
  if (!(sample_time > 0.0) || !std::isfinite(sample_time)) {
    throw std::invalid_argument("sample time must be positive");
  }
  if (channels.empty() || channels.front().empty()) {
    throw std::invalid_argument("system needs at least one channel");
  }
  Eigen::Index n_x = 0;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i].size() != channels.front().size()) {
      throw std::invalid_argument("channel grid is not rectangular");
    }
    for (std::size_t j = 0; j < channels[i].size(); ++j) {
      try {
        channels[i][j].validate();
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(channel_name(i, j) + ": " + e.what());
      }
      n_x += channels[i][j].states();
    }
  }
  for (const auto& nc : noise_channels) {
    const auto n = nc.a_c.rows();
    if (nc.a_c.cols() != n || nc.b_c.rows() != n || nc.b_c.cols() != 1 ||
        nc.c_c.rows() != 1 || nc.c_c.cols() != n) {
      throw std::invalid_argument("inconsistent noise channel dimensions");
    }
    if (nc.output < 0 || nc.output >= outputs()) {
      throw std::invalid_argument("noise channel output index out of range");
    }
    n_x += n;
  }
  if (g_c.size() > 0 && g_c.rows() != n_x) {
    throw std::invalid_argument("g_c rows must equal the stacked state size");
  }
}

DelayConstants delay_constants(double tau, double ts) {
  if (!(ts > 0.0) || !std::isfinite(ts)) {
    throw std::invalid_argument("sample time must be positive and finite");
  }
  if (!std::isfinite(tau)) {
    throw std::invalid_argument("delay must be finite");
  }
  if (tau < 0.0) {
    throw std::invalid_argument("delay must be nonnegative");
  }
  DelayConstants out;
  out.l = tau / ts;
  // Integer multiples that suffer from division roundoff are snapped.
  const double nearest = std::round(out.l);
  if (std::abs(out.l - nearest) <= 1e-12 * std::max(1.0, out.l)) {
    out.l = nearest;
    out.m = static_cast<int>(nearest);
    out.v = 0.0;
  } else {
    out.m = static_cast<int>(std::ceil(out.l));
    out.v = out.m - out.l;
  }
  return out;
}

Matrix selection_block(int p, int k_blocks, Eigen::Index n_u) {
  if (k_blocks < 1 || n_u < 1 || p < 1 || p > k_blocks) {
    throw std::out_of_range("selection block index out of range");
  }
  Matrix e = Matrix::Zero(n_u, k_blocks * n_u);
  e.block(0, (p - 1) * n_u, n_u, n_u).setIdentity();
  return e;
}

StackedCoefficients stack_mimo(const MimoDelaySystem& sys) {
  sys.validate();
  const auto n_z = sys.outputs();
  const auto n_u = sys.inputs();
  const double ts = sys.sample_time;

  StackedCoefficients sc;
  sc.n_z = n_z;
  sc.n_u = n_u;
  sc.m_grid.resize(n_z, n_u);
  sc.v_grid.resize(n_z, n_u);

  Eigen::Index n_x = 0;
  for (Eigen::Index j = 0; j < n_u; ++j) {
    for (Eigen::Index i = 0; i < n_z; ++i) {
      const auto& ch = sys.channels[i][j];
      const auto dc = delay_constants(ch.tau, ts);
      sc.m_grid(i, j) = dc.m;
      sc.v_grid(i, j) = dc.v;
      n_x += ch.states();
    }
  }
  for (const auto& nc : sys.noise_channels) n_x += nc.states();
  sc.n_x = n_x;
  sc.m_bar = sc.m_grid.maxCoeff();

  const auto n_ext = sc.extended_inputs();
  sc.a_c = Matrix::Zero(n_x, n_x);
  sc.v_mat = Matrix::Zero(n_x, n_x);
  sc.b_1c = Matrix::Zero(n_x, n_ext);
  sc.b_2c = Matrix::Zero(n_x, n_ext);
  sc.c_c = Matrix::Zero(n_z, n_x);
  sc.d_o = Matrix::Zero(n_z, n_ext);

  // Column of u_j inside block p (1-based) of the extended input.
  const auto column = [&](int p, Eigen::Index j) { return (p - 1) * n_u + j; };

  Eigen::Index row = 0;
  for (Eigen::Index j = 0; j < n_u; ++j) {
    for (Eigen::Index i = 0; i < n_z; ++i) {
      const auto& ch = sys.channels[i][j];
      const auto n = ch.states();
      const int m = sc.m_grid(i, j);
      const double v = sc.v_grid(i, j);
      // b_1c selects u_{k-m}, b_2c selects u_{k-m+1}.
      const int p1 = sc.m_bar + 1 - m;
      if (n > 0) {
        sc.a_c.block(row, row, n, n) = ch.a_c;
        sc.v_mat.block(row, row, n, n) = v * Matrix::Identity(n, n);
        sc.b_1c.block(row, column(p1, j), n, 1) = ch.b_c;
        if (v > 0.0) {
          sc.b_2c.block(row, column(p1 + 1, j), n, 1) = ch.b_c;
        }
        sc.c_c.block(i, row, 1, n) = ch.c_c;
      }
      sc.d_o(i, column(p1, j)) += ch.d_c;
      row += n;
    }
  }

  Eigen::Index noise_cols = 0;
  const Eigen::Index noise_row0 = row;
  for (const auto& nc : sys.noise_channels) {
    const auto n = nc.states();
    if (n > 0) {
      sc.a_c.block(row, row, n, n) = nc.a_c;
      sc.c_c.block(nc.output, row, 1, n) += nc.c_c;
    }
    row += n;
    ++noise_cols;
  }

  if (sys.g_c.size() > 0) {
    sc.g_c = sys.g_c;
  } else {
    sc.g_c = Matrix::Zero(n_x, noise_cols);
    Eigen::Index r = noise_row0;
    for (Eigen::Index k = 0; k < noise_cols; ++k) {
      const auto& nc = sys.noise_channels[static_cast<std::size_t>(k)];
      sc.g_c.block(r, k, nc.states(), 1) = nc.b_c;
      r += nc.states();
    }
  }

  sc.b_bar_2c = sc.v_mat * (sc.b_2c - sc.b_1c);
  return sc;
}

AugmentedDiscreteSystem augment_discrete(const Matrix& a, const Matrix& b_o,
                                         const Matrix& d_o, const Matrix& c_c,
                                         int m_bar, Eigen::Index n_u) {
  if (m_bar < 0 || n_u < 1) {
    throw std::invalid_argument("augment_discrete: bad augmentation sizes");
  }
  const auto n_x = a.rows();
  const auto n_ext = (m_bar + 1) * n_u;
  if (a.cols() != n_x || b_o.rows() != n_x || c_c.cols() != n_x ||
      d_o.rows() != c_c.rows()) {
    throw std::invalid_argument("augment_discrete: dimension mismatch");
  }
  if (b_o.cols() != n_ext || d_o.cols() != n_ext) {
    throw std::invalid_argument(
        "augment_discrete: B_o/D_o columns do not split into mbar+1 blocks");
  }
  const auto n_hist = m_bar * n_u;
  const auto n_z = c_c.rows();

  AugmentedDiscreteSystem out;
  out.n_x = n_x;
  out.m_bar = m_bar;
  out.n_u = n_u;
  out.a_tilde = Matrix::Zero(n_x + n_hist, n_x + n_hist);
  out.b_tilde = Matrix::Zero(n_x + n_hist, n_u);
  out.c_tilde = Matrix::Zero(n_z, n_x + n_hist);

  out.a_tilde.topLeftCorner(n_x, n_x) = a;
  out.a_tilde.topRightCorner(n_x, n_hist) = b_o.leftCols(n_hist);
  // I_A shifts the history up one block.
  for (int r = 0; r + 1 < m_bar; ++r) {
    out.a_tilde.block(n_x + r * n_u, n_x + (r + 1) * n_u, n_u, n_u)
        .setIdentity();
  }
  out.b_tilde.topRows(n_x) = b_o.rightCols(n_u);
  if (m_bar > 0) out.b_tilde.bottomRows(n_u).setIdentity();

  out.c_tilde.leftCols(n_x) = c_c;
  out.c_tilde.rightCols(n_hist) = d_o.leftCols(n_hist);
  out.d_tilde = d_o.rightCols(n_u);
  return out;
}

Matrix dense_reference_sim(const MimoDelaySystem& sys, const Matrix& u_seq,
                           int substeps) {
  sys.validate();
  if (substeps < 100) {
    throw std::invalid_argument("dense_reference_sim needs >= 100 substeps");
  }
  if (!u_seq.allFinite()) {
    throw std::invalid_argument("dense_reference_sim: nonfinite input");
  }
  const auto n_z = sys.outputs();
  const auto n_u = sys.inputs();
  if (u_seq.rows() != n_u) {
    throw std::invalid_argument("dense_reference_sim: input row count");
  }
  const auto steps = u_seq.cols();
  const double ts = sys.sample_time;
  const auto input = [&](Eigen::Index j, Eigen::Index k) {
    return k < 0 ? 0.0 : u_seq(j, k);
  };

  Matrix z = Matrix::Zero(n_z, steps);
  for (Eigen::Index i = 0; i < n_z; ++i) {
    for (Eigen::Index j = 0; j < n_u; ++j) {
      const auto& ch = sys.channels[i][j];
      const auto dc = delay_constants(ch.tau, ts);
      Vector x = Vector::Zero(ch.states());
      const Vector b = ch.b_c.col(0);
      // Within [t_k, t_k+1) the delayed input is u_{k-m} until
      // t_k + (1 - v) ts and u_{k-m+1} afterwards.
      const int n1 = dc.v > 0.0
                         ? std::clamp(static_cast<int>(std::lround(
                                          substeps * (1.0 - dc.v))),
                                      1, substeps - 1)
                         : substeps;
      const int n2 = substeps - n1;
      const double h1 = (1.0 - dc.v) * ts / n1;
      const double h2 = n2 > 0 ? dc.v * ts / n2 : 0.0;
      for (Eigen::Index k = 0; k < steps; ++k) {
        const double u_old = input(j, k - dc.m);
        z(i, k) += (ch.states() > 0 ? (ch.c_c * x)(0, 0) : 0.0) +
                   ch.d_c * u_old;
        if (ch.states() == 0) continue;
        rk4_constant_input(ch.a_c, b * u_old, h1, n1, x);
        if (n2 > 0) {
          rk4_constant_input(ch.a_c, b * input(j, k - dc.m + 1), h2, n2, x);
        }
      }
    }
  }
  return z;
}

Matrix simulate_augmented(const AugmentedDiscreteSystem& sys,
                          const Matrix& u_seq) {
  if (u_seq.rows() != sys.n_u) {
    throw std::invalid_argument("simulate_augmented: input row count");
  }
  Vector x = Vector::Zero(sys.states());
  Matrix z(sys.c_tilde.rows(), u_seq.cols());
  for (Eigen::Index k = 0; k < u_seq.cols(); ++k) {
    z.col(k) = sys.c_tilde * x + sys.d_tilde * u_seq.col(k);
    x = sys.a_tilde * x + sys.b_tilde * u_seq.col(k);
  }
  return z;
}

}  // namespace lqd
