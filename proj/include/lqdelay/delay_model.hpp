#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace lqd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntMatrix = Eigen::MatrixXi;

/**
 * SISO channel  x' = a x + b u(t - tau),  z = c x + d u(t - tau).
 *
 * A channel with zero states is a pure (delayed) static gain.
 */
struct SisoDelayChannel {
  Matrix a_c;  // n x n
  Matrix b_c;  // n x 1
  Matrix c_c;  // 1 x n
  double d_c = 0.0;
  double tau = 0.0;

  [[nodiscard]] Eigen::Index states() const { return a_c.rows(); }
  void validate() const;
};

/// Stochastic-only states driven by one white-noise component each:
/// dx = a x dt + b dw,  contributing c x to output `output`.
struct NoiseChannel {
  Eigen::Index output = 0;
  Matrix a_c;
  Matrix b_c;
  Matrix c_c;

  [[nodiscard]] Eigen::Index states() const { return a_c.rows(); }
};

/// Split of tau / ts = m - v into an integer and a fractional delay.
struct DelayConstants {
  double l = 0.0;
  int m = 0;
  double v = 0.0;
};

/**
 * Continuous-time plant made of an n_z x n_u grid of delayed SISO channels.
 *
 * Stacked state order is column major over the grid
 * (x_11, x_21, ..., x_{n_z 1}, x_12, ...), followed by the states of any
 * noise channels. `g_c`, when non-empty, is the process-noise gain over
 * that full stacked state; otherwise the gain is assembled from the noise
 * channels (one white-noise component each).
 */
struct MimoDelaySystem {
  std::vector<std::vector<SisoDelayChannel>> channels;  // [output][input]
  std::vector<NoiseChannel> noise_channels;
  Matrix g_c;
  double sample_time = 1.0;

  [[nodiscard]] Eigen::Index outputs() const {
    return static_cast<Eigen::Index>(channels.size());
  }
  [[nodiscard]] Eigen::Index inputs() const {
    return channels.empty() ? 0
                            : static_cast<Eigen::Index>(channels.front().size());
  }
  void validate() const;
};

/// Continuous coefficients of the stacked system acting on the extended
/// input u~_k = [u_{k-mbar}; ...; u_{k-1}; u_k].
struct StackedCoefficients {
  Matrix a_c;
  Matrix v_mat;
  Matrix b_1c;
  Matrix b_2c;
  Matrix b_bar_2c;
  Matrix c_c;
  Matrix d_o;
  Matrix g_c;
  IntMatrix m_grid;
  Matrix v_grid;
  int m_bar = 0;
  Eigen::Index n_x = 0;
  Eigen::Index n_u = 0;
  Eigen::Index n_z = 0;

  /// Width of the extended input, (mbar + 1) n_u.
  [[nodiscard]] Eigen::Index extended_inputs() const {
    return (m_bar + 1) * n_u;
  }
};

/// Delay-free discrete realization over x~_k = [x_k; u_{k-mbar}; ...; u_{k-1}].
struct AugmentedDiscreteSystem {
  Matrix a_tilde;
  Matrix b_tilde;
  Matrix c_tilde;
  Matrix d_tilde;
  Eigen::Index n_x = 0;
  int m_bar = 0;
  Eigen::Index n_u = 0;

  [[nodiscard]] Eigen::Index states() const { return a_tilde.rows(); }
};

DelayConstants delay_constants(double tau, double ts);

/// n_u x (k_blocks n_u) matrix with an identity in block p (1-based).
Matrix selection_block(int p, int k_blocks, Eigen::Index n_u);

StackedCoefficients stack_mimo(const MimoDelaySystem& sys);

AugmentedDiscreteSystem augment_discrete(const Matrix& a, const Matrix& b_o,
                                         const Matrix& d_o, const Matrix& c_c,
                                         int m_bar, Eigen::Index n_u);

/**
 * Fine-grid integration of the delayed ODEs, used as an oracle for the
 * discrete realization. Inputs before t = 0 are zero and the state starts
 * at rest. Each sampling interval is split at every channel's delay switch
 * time and integrated with RK4 using `substeps` steps per interval.
 *
 * @param u_seq One column per sample, n_u rows.
 * @return One column per sample: z(t_k) for k = 0 .. u_seq.cols() - 1.
 */
Matrix dense_reference_sim(const MimoDelaySystem& sys, const Matrix& u_seq,
                           int substeps);

/// Simulates x~_{k+1} = A~ x~_k + B~ u_k from rest; returns z_k per column.
Matrix simulate_augmented(const AugmentedDiscreteSystem& sys,
                          const Matrix& u_seq);

}  // namespace lqd
