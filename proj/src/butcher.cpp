#include "lqdelay/butcher.hpp"

#include <cmath>
#include <stdexcept>

namespace lqd {

namespace {

ButcherTableau make(std::string name, Eigen::MatrixXd a, Eigen::VectorXd b) {
  ButcherTableau t;
  t.name = std::move(name);
  t.c = a.rowwise().sum();
  t.a = std::move(a);
  t.b = std::move(b);
  return t;
}

}  // namespace

bool ButcherTableau::is_explicit() const {
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = i; j < a.cols(); ++j) {
      if (a(i, j) != 0.0) return false;
    }
  }
  return true;
}

void ButcherTableau::validate() const {
  const auto s = b.size();
  if (s < 1 || a.rows() != s || a.cols() != s || c.size() != s) {
    throw std::invalid_argument("Butcher tableau has inconsistent sizes");
  }
  if (std::abs(b.sum() - 1.0) > 1e-14) {
    throw std::invalid_argument("Butcher weights must sum to one");
  }
}

ButcherTableau ButcherTableau::euler() {
  return make("euler", Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1));
}

ButcherTableau ButcherTableau::heun() {
  Eigen::MatrixXd a(2, 2);
  a << 0, 0, 1, 0;
  Eigen::VectorXd b(2);
  b << 0.5, 0.5;
  return make("heun", a, b);
}

ButcherTableau ButcherTableau::midpoint() {
  Eigen::MatrixXd a(2, 2);
  a << 0, 0, 0.5, 0;
  Eigen::VectorXd b(2);
  b << 0, 1;
  return make("midpoint", a, b);
}

ButcherTableau ButcherTableau::kutta3() {
  Eigen::MatrixXd a(3, 3);
  a << 0, 0, 0, 0.5, 0, 0, -1, 2, 0;
  Eigen::VectorXd b(3);
  b << 1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0;
  return make("kutta3", a, b);
}

ButcherTableau ButcherTableau::rk4() {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4, 4);
  a(1, 0) = 0.5;
  a(2, 1) = 0.5;
  a(3, 2) = 1.0;
  Eigen::VectorXd b(4);
  b << 1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0;
  return make("rk4", a, b);
}

ButcherTableau ButcherTableau::rk38() {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4, 4);
  a(1, 0) = 1.0 / 3.0;
  a(2, 0) = -1.0 / 3.0;
  a(2, 1) = 1.0;
  a(3, 0) = 1.0;
  a(3, 1) = -1.0;
  a(3, 2) = 1.0;
  Eigen::VectorXd b(4);
  b << 1.0 / 8.0, 3.0 / 8.0, 3.0 / 8.0, 1.0 / 8.0;
  return make("rk38", a, b);
}

ButcherTableau ButcherTableau::backward_euler() {
  return make("backward_euler", Eigen::MatrixXd::Ones(1, 1),
              Eigen::VectorXd::Ones(1));
}

ButcherTableau ButcherTableau::implicit_midpoint() {
  return make("implicit_midpoint", Eigen::MatrixXd::Constant(1, 1, 0.5),
              Eigen::VectorXd::Ones(1));
}

ButcherTableau ButcherTableau::gauss_legendre4() {
  const double r = std::sqrt(3.0) / 6.0;
  Eigen::MatrixXd a(2, 2);
  a << 0.25, 0.25 - r, 0.25 + r, 0.25;
  Eigen::VectorXd b(2);
  b << 0.5, 0.5;
  return make("gauss4", a, b);
}

std::vector<std::string> tableau_names() {
  return {"euler", "heun",           "midpoint",          "kutta3", "rk4",
          "rk38",  "backward_euler", "implicit_midpoint", "gauss4"};
}

ButcherTableau tableau_by_name(const std::string& name) {
  if (name == "euler") return ButcherTableau::euler();
  if (name == "heun") return ButcherTableau::heun();
  if (name == "midpoint") return ButcherTableau::midpoint();
  if (name == "kutta3") return ButcherTableau::kutta3();
  if (name == "rk4") return ButcherTableau::rk4();
  if (name == "rk38") return ButcherTableau::rk38();
  if (name == "backward_euler") return ButcherTableau::backward_euler();
  if (name == "implicit_midpoint") return ButcherTableau::implicit_midpoint();
  if (name == "gauss4") return ButcherTableau::gauss_legendre4();
  throw std::invalid_argument("unknown tableau '" + name + "'");
}

}  // namespace lqd
