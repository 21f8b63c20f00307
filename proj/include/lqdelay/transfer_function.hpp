#pragma once

#include <vector>

#include "lqdelay/delay_model.hpp"

namespace lqd {

/// num(s) / den(s) * exp(-delay s), coefficients in descending powers of s.
struct TransferFunction {
  std::vector<double> numerator;
  std::vector<double> denominator;
  double delay = 0.0;

  /// k e^{-delay s} / (tau s + 1)
  static TransferFunction first_order(double gain, double time_constant,
                                      double delay = 0.0);
  /// k e^{-delay s} / ((tau1 s + 1)(tau2 s + 1))
  static TransferFunction second_order(double gain, double tau1, double tau2,
                                       double delay = 0.0);

  [[nodiscard]] double dc_gain() const;
};

std::vector<double> poly_multiply(const std::vector<double>& a,
                                  const std::vector<double>& b);

/// Controllable canonical realization.
SisoDelayChannel tf_realize(const TransferFunction& tf);

/// Realizes a delay-free transfer function as a noise-driven channel.
NoiseChannel noise_channel_from_tf(const TransferFunction& tf,
                                   Eigen::Index output);

}  // namespace lqd
