#include "lqdelay/transfer_function.hpp"

#include <cmath>
#include <stdexcept>

namespace lqd {

namespace {

std::vector<double> strip_leading_zeros(std::vector<double> p) {
  std::size_t first = 0;
  while (first + 1 < p.size() && p[first] == 0.0) ++first;
  p.erase(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(first));
  return p;
}

}  // namespace

TransferFunction TransferFunction::first_order(double gain,
                                               double time_constant,
                                               double delay) {
  return {{gain}, {time_constant, 1.0}, delay};
}

TransferFunction TransferFunction::second_order(double gain, double tau1,
                                                double tau2, double delay) {
  return {{gain}, poly_multiply({tau1, 1.0}, {tau2, 1.0}), delay};
}

double TransferFunction::dc_gain() const {
  if (denominator.empty() || denominator.back() == 0.0) {
    throw std::domain_error("transfer function has a pole at s = 0");
  }
  return (numerator.empty() ? 0.0 : numerator.back()) / denominator.back();
}

std::vector<double> poly_multiply(const std::vector<double>& a,
                                  const std::vector<double>& b) {
  if (a.empty() || b.empty()) return {};
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

SisoDelayChannel tf_realize(const TransferFunction& tf) {
  if (tf.denominator.empty()) {
    throw std::invalid_argument("transfer function has an empty denominator");
  }
  if (tf.denominator.front() == 0.0) {
    throw std::invalid_argument("leading denominator coefficient is zero");
  }
  const auto den = tf.denominator;
  const auto num = strip_leading_zeros(
      tf.numerator.empty() ? std::vector<double>{0.0} : tf.numerator);
  const auto n = static_cast<Eigen::Index>(den.size()) - 1;
  if (static_cast<Eigen::Index>(num.size()) - 1 > n) {
    throw std::invalid_argument("improper transfer function");
  }
  for (double c : den) {
    if (!std::isfinite(c)) throw std::invalid_argument("nonfinite coefficient");
  }

  SisoDelayChannel ch;
  ch.tau = tf.delay;
  // Normalized, ascending: a_i and b_i are the s^i coefficients.
  const double lead = den.front();
  Eigen::VectorXd a(n + 1), b = Eigen::VectorXd::Zero(n + 1);
  for (Eigen::Index i = 0; i <= n; ++i) a(i) = den[n - i] / lead;
  const auto nn = static_cast<Eigen::Index>(num.size());
  for (Eigen::Index i = 0; i < nn; ++i) b(i) = num[nn - 1 - i] / lead;

  ch.d_c = b(n);
  ch.a_c = Matrix::Zero(n, n);
  ch.b_c = Matrix::Zero(n, 1);
  ch.c_c = Matrix::Zero(1, n);
  if (n == 0) return ch;
  for (Eigen::Index i = 0; i + 1 < n; ++i) ch.a_c(i, i + 1) = 1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    ch.a_c(n - 1, i) = -a(i);
    ch.c_c(0, i) = b(i) - ch.d_c * a(i);
  }
  ch.b_c(n - 1, 0) = 1.0;
  return ch;
}

NoiseChannel noise_channel_from_tf(const TransferFunction& tf,
                                   Eigen::Index output) {
  if (tf.delay != 0.0) {
    throw std::invalid_argument("noise channels cannot be delayed");
  }
  const auto ch = tf_realize(tf);
  if (ch.d_c != 0.0) {
    throw std::invalid_argument("noise channel must be strictly proper");
  }
  return {output, ch.a_c, ch.b_c, ch.c_c};
}

}  // namespace lqd
