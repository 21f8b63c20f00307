#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace lqd {

/// Runge-Kutta coefficients. Stage i evaluates at t + c_i h with
/// y_i = y + h sum_j a_ij f(y_j); the step is y + h sum_i b_i f(y_i).
struct ButcherTableau {
  std::string name;
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Eigen::VectorXd c;

  [[nodiscard]] Eigen::Index stages() const { return b.size(); }
  /// Strictly lower triangular a.
  [[nodiscard]] bool is_explicit() const;
  void validate() const;

  static ButcherTableau euler();
  static ButcherTableau heun();
  static ButcherTableau midpoint();
  static ButcherTableau kutta3();
  static ButcherTableau rk4();
  static ButcherTableau rk38();
  static ButcherTableau backward_euler();
  static ButcherTableau implicit_midpoint();
  static ButcherTableau gauss_legendre4();
};

ButcherTableau tableau_by_name(const std::string& name);
std::vector<std::string> tableau_names();

}  // namespace lqd
