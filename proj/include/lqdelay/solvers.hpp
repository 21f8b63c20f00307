#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "lqdelay/butcher.hpp"
#include "lqdelay/delay_model.hpp"
#include "lqdelay/ode_rhs.hpp"

namespace lqd {

enum class Method { FixedStep, MatrixExp, StepDoubling };

std::string to_string(Method m);
/// Accepts "ode"/"fixed_step", "expm"/"matrix_exp", "doubling"/"step_doubling".
Method method_from_string(const std::string& s);

/// e^x by scaling and squaring with a diagonal Pade approximant.
Matrix expm(const Matrix& x);

/**
 * Stage coefficient matrices of an RK method applied to the linear
 * systems X' = A_c X, X' = V A_c X and H' = H_c H, so that stage i of a
 * step from X_k is lambda_i X_k and the step is lambda X_k.
 */
struct StageCoefficients {
  std::vector<Matrix> lambda_i;
  std::vector<Matrix> lambda_v_i;
  std::vector<Matrix> omega_i;
  std::vector<Matrix> theta_1_i;  // sum_j a_ij lambda_j
  std::vector<Matrix> theta_2_i;  // sum_j a_ij lambda_v_j
  Matrix lambda;
  Matrix lambda_v;
  Matrix omega;
  Matrix theta_1;  // sum_i b_i lambda_i
  Matrix theta_2;  // sum_i b_i lambda_v_i
};

/// `h_c` may be empty, in which case the omega terms are skipped.
StageCoefficients stage_coefficients(const ButcherTableau& tab, double h,
                                     const Matrix& a_c, const Matrix& v_a_c,
                                     const Matrix& h_c);

struct DiscretizationResult {
  Matrix a;
  Matrix b_o;
  Matrix q;
  Matrix m;
  Matrix r_ww;
  Matrix gamma;  // [A, B_o; 0, I] at ts
  double rho_w = 0.0;
  Method method = Method::MatrixExp;
  long long n_steps = 1;
  std::chrono::duration<double> wall_time{0.0};
};

DiscretizationResult solve_fixed_step(const StackedCoefficients& coeffs,
                                      const Matrix& q_c, const Matrix& g_c,
                                      double ts, long long n,
                                      const ButcherTableau& tab);

DiscretizationResult solve_matrix_exp(const StackedCoefficients& coeffs,
                                      const Matrix& q_c, const Matrix& g_c,
                                      double ts);

DiscretizationResult solve_step_doubling(const StackedCoefficients& coeffs,
                                         const Matrix& q_c, const Matrix& g_c,
                                         double ts, int j,
                                         const ButcherTableau& tab);

struct SolverOptions {
  Method method = Method::MatrixExp;
  long long n = 1LL << 14;  // fixed-step count
  int j = 14;               // step-doubling passes, N = 2^j
  ButcherTableau tableau = ButcherTableau::rk4();
};

DiscretizationResult solve(const StackedCoefficients& coeffs, const Matrix& q_c,
                           const Matrix& g_c, double ts,
                           const SolverOptions& opts);

/// Induced infinity norm, the largest absolute row sum.
double inf_norm(const Matrix& x);

/// max |x - y| over entries, divided by max |y| (or 1 if y is zero).
double relative_difference(const Matrix& x, const Matrix& y);

struct MethodErrors {
  double a = 0.0;
  double b_o = 0.0;
  double r_ww = 0.0;
  double m = 0.0;
  double q = 0.0;
};

/// Infinity-norm errors of each output against a reference solution.
MethodErrors errors_against(const DiscretizationResult& x,
                            const DiscretizationResult& ref);

}  // namespace lqd
