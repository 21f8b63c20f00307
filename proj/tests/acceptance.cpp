// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 iff all
// criteria pass. Tolerances are fixed here and never read from input files.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lqdelay/closed_loop.hpp"
#include "lqdelay/io.hpp"
#include "lqdelay/lq_api.hpp"
#include "lqdelay/mpc.hpp"
#include "lqdelay/solvers.hpp"
#include "support.hpp"

using namespace lqd;
namespace lt = lqd::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string data_path(const std::string& name) {
  return std::string(LQDELAY_DATA_DIR) + "/" + name;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

template <typename F>
double median_time(F&& f, int repeats) {
  std::vector<double> t;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = Clock::now();
    f();
    t.push_back(seconds_since(t0));
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

// ---------------------------------------------------------------------------

struct CementBench {
  StackedCoefficients sc;
  Matrix q_c;
  double ts = 0.0;
};

CementBench cement_bench() {
  const auto p = problem_from_json(load_json(data_path("cement_mill_problem.json")));
  return {stack_mimo(p.system), p.q_c, p.system.sample_time};
}

Outcome table_errors() {
  constexpr double kTightTol = 1e-11;  // A, B_o, R_ww
  constexpr double kLooseTol = 1e-6;   // M, Q
  constexpr double kTimeLimit = 60.0;
  const auto t0 = Clock::now();
  const auto b = cement_bench();
  const auto ex = solve_matrix_exp(b.sc, b.q_c, b.sc.g_c, b.ts);
  const auto fs = solve_fixed_step(b.sc, b.q_c, b.sc.g_c, b.ts, 1LL << 14,
                                   ButcherTableau::rk4());
  const auto e = errors_against(fs, ex);
  const double elapsed = seconds_since(t0);
  const bool pass = e.a <= kTightTol && e.b_o <= kTightTol &&
                    e.r_ww <= kTightTol && e.m <= kLooseTol &&
                    e.q <= kLooseTol && elapsed < kTimeLimit;
  return {pass, "e(A)=" + fmt("%.2e", e.a) + " e(B_o)=" + fmt("%.2e", e.b_o) +
                    " e(R_ww)=" + fmt("%.2e", e.r_ww) + " e(M)=" +
                    fmt("%.2e", e.m) + " e(Q)=" + fmt("%.2e", e.q) +
                    " time=" + fmt("%.2fs", elapsed)};
}

Outcome doubling_equivalence() {
  constexpr double kRelTol = 1e-12;
  constexpr double kMinSpeedup = 10.0;
  const auto b = cement_bench();
  DiscretizationResult fs, sd;
  const double t_fs = median_time(
      [&] {
        fs = solve_fixed_step(b.sc, b.q_c, b.sc.g_c, b.ts, 1LL << 14,
                              ButcherTableau::rk4());
      },
      3);
  const double t_sd = median_time(
      [&] {
        sd = solve_step_doubling(b.sc, b.q_c, b.sc.g_c, b.ts, 14,
                                 ButcherTableau::rk4());
      },
      3);
  const double rel = std::max(
      {relative_difference(sd.a, fs.a), relative_difference(sd.b_o, fs.b_o),
       relative_difference(sd.q, fs.q), relative_difference(sd.m, fs.m),
       relative_difference(sd.r_ww, fs.r_ww),
       relative_difference(sd.gamma, fs.gamma),
       std::abs(sd.rho_w - fs.rho_w) / std::max(1.0, std::abs(fs.rho_w))});
  const double speedup = t_fs / t_sd;
  return {rel <= kRelTol && speedup >= kMinSpeedup,
          "max relative difference=" + fmt("%.2e", rel) +
              " speedup=" + fmt("%.1fx", speedup)};
}

Outcome convergence_order() {
  constexpr double kMinSlope = 3.5;
  std::mt19937_64 rng(20240601);
  MimoDelaySystem sys;
  sys.sample_time = 1.0;
  sys.channels = {{lt::random_channel(rng, 2, lt::fractional_delay(rng, 1.0, 1)),
                   lt::random_channel(rng, 1, lt::fractional_delay(rng, 1.0, 1))}};
  const auto sc = stack_mimo(sys);
  const Matrix g_c = lt::randn(rng, sc.n_x, 2, 0.5);
  const Matrix q_c = Matrix::Ones(1, 1);
  const auto ex = solve_matrix_exp(sc, q_c, g_c, 1.0);
  std::vector<double> ns, errs;
  std::string detail = "n_x=" + std::to_string(sc.n_x) + " e(Q):";
  for (int n = 16; n <= 256; n *= 2) {
    const auto fs =
        solve_fixed_step(sc, q_c, g_c, 1.0, n, ButcherTableau::rk4());
    const double e = inf_norm(fs.q - ex.q);
    ns.push_back(n);
    errs.push_back(e);
    detail += " " + fmt("%.1e", e);
  }
  const double slope = -lt::loglog_slope(ns, errs);
  return {sc.n_x == 3 && slope >= kMinSlope,
          detail + " slope=" + fmt("%.2f", slope)};
}

Outcome realization() {
  constexpr double kTol = 1e-6;
  constexpr double kTimeLimit = 1.0;
  constexpr int kSystems = 20;
  constexpr int kSteps = 50;
  std::mt19937_64 rng(777);
  double worst = 0.0, slowest = 0.0;
  for (int s = 0; s < kSystems; ++s) {
    const auto sys = lt::random_system(rng, lt::uniform_int(rng, 1, 2),
                                       lt::uniform_int(rng, 1, 2),
                                       lt::uniform(rng, 0.5, 2.0), 3, s % 2 == 1);
    const Matrix u = lt::randn(rng, sys.inputs(), kSteps);
    const auto t0 = Clock::now();
    const auto sc = stack_mimo(sys);
    const auto r = solve_matrix_exp(sc, Matrix::Identity(sc.n_z, sc.n_z),
                                    Matrix::Zero(sc.n_x, 0), sys.sample_time);
    const auto aug =
        augment_discrete(r.a, r.b_o, sc.d_o, sc.c_c, sc.m_bar, sc.n_u);
    const Matrix z_aug = simulate_augmented(aug, u);
    const Matrix z_ref = dense_reference_sim(sys, u, 400);
    slowest = std::max(slowest, seconds_since(t0));
    worst = std::max(worst, lt::max_abs(z_aug - z_ref));
  }
  return {worst <= kTol && slowest <= kTimeLimit,
          "max |z_aug - z_dense|=" + fmt("%.2e", worst) +
              " slowest=" + fmt("%.3fs", slowest)};
}

Outcome closed_forms() {
  constexpr double kTol = 1e-12;
  auto make = [](double tau) {
    MimoDelaySystem sys;
    SisoDelayChannel ch;
    ch.a_c = Matrix::Zero(1, 1);
    ch.b_c = Matrix::Ones(1, 1);
    ch.c_c = Matrix::Ones(1, 1);
    ch.tau = tau;
    sys.channels = {{ch}};
    sys.sample_time = 1.0;
    return stack_mimo(sys);
  };
  Matrix q(2, 2), m(2, 1);
  q << 1, 0.5, 0.5, 1.0 / 3.0;
  m << -1, -0.5;
  Matrix b_delayed(1, 2);
  b_delayed << 0.5, 0.5;
  const Matrix one = Matrix::Ones(1, 1);
  double worst = 0.0;
  for (auto method :
       {Method::FixedStep, Method::MatrixExp, Method::StepDoubling}) {
    SolverOptions o;
    o.method = method;
    o.n = 16;
    o.j = 4;
    const auto free = solve(make(0.0), one, one, 1.0, o);
    const auto delayed = solve(make(0.5), one, one, 1.0, o);
    worst = std::max({worst, std::abs(free.a(0, 0) - 1.0),
                      std::abs(free.b_o(0, 0) - 1.0), lt::max_abs(free.q - q),
                      lt::max_abs(free.m - m),
                      std::abs(free.r_ww(0, 0) - 1.0),
                      lt::max_abs(delayed.b_o - b_delayed)});
  }
  return {worst <= kTol, "max deviation=" + fmt("%.2e", worst)};
}

Outcome monte_carlo() {
  constexpr int kDraws = 10000;
  constexpr int kSteps = 10;
  constexpr int kSub = 100;  // fine steps per sample, aligned with the delay
  constexpr double kSigmas = 3.0;
  constexpr double kTimeLimit = 30.0;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4242);

  ContinuousLqProblem p;
  SisoDelayChannel ch = lt::random_channel(rng, 2, 0.3);
  p.system.channels = {{ch}};
  p.system.sample_time = 1.0;
  p.system.g_c = lt::randn(rng, 2, 2, 0.7);
  p.q_c = Matrix::Constant(1, 1, 1.5);
  p.horizon_steps = kSteps;
  p.references = lt::randn(rng, 1, kSteps);
  p.p0 = lt::random_spd(rng, 2, 0.05) * 0.2;
  const Vector x_mean = lt::randn(rng, 2, 1);
  const Matrix u = lt::randn(rng, 1, kSteps);

  SolverOptions opts;
  opts.method = Method::MatrixExp;
  const auto d = discretize(p, opts, true);
  Vector x_tilde0 = Vector::Zero(d.sys.states());
  x_tilde0.head(2) = x_mean;
  const double psi = d.objective(x_tilde0, u);

  // Fine-grid exact sampling of the SDE.
  const double h = p.system.sample_time / kSub;
  const auto zoh = lt::zoh_oracle(ch.a_c, h);
  const Eigen::Matrix2d phi = zoh.phi;
  const Eigen::Vector2d gam = zoh.gamma * ch.b_c;
  const Eigen::Matrix2d chol_w =
      Matrix(lt::noise_covariance_oracle(ch.a_c, p.system.g_c, h)).llt().matrixL();
  const Eigen::Matrix2d chol_0 = Matrix(p.p0).llt().matrixL();
  const Eigen::RowVector2d c = ch.c_c;
  const double qc = p.q_c(0, 0);
  const int lag_sub = static_cast<int>(std::lround(ch.tau / h));
  // Input acting on fine step i is u at time t_i - tau, zero before t = 0.
  std::vector<double> u_fine(static_cast<std::size_t>(kSteps * kSub), 0.0);
  for (int i = 0; i < kSteps * kSub; ++i) {
    const int src = i - lag_sub;
    if (src >= 0) u_fine[static_cast<std::size_t>(i)] = u(0, src / kSub);
  }

  std::normal_distribution<double> nd;
  double sum = 0.0, sum_sq = 0.0;
  for (int draw = 0; draw < kDraws; ++draw) {
    Eigen::Vector2d x = x_mean + chol_0 * Eigen::Vector2d(nd(rng), nd(rng));
    double phi_cost = 0.0;
    for (int k = 0; k < kSteps; ++k) {
      const double zbar = p.references(0, k);
      double e0 = c.dot(x) - zbar;
      for (int s = 0; s < kSub; ++s) {
        const int i = k * kSub + s;
        x = phi * x + gam * u_fine[static_cast<std::size_t>(i)] +
            chol_w * Eigen::Vector2d(nd(rng), nd(rng));
        const double e1 = c.dot(x) - zbar;
        phi_cost += 0.25 * qc * h * (e0 * e0 + e1 * e1);
        e0 = e1;
      }
    }
    sum += phi_cost;
    sum_sq += phi_cost * phi_cost;
  }
  const double mean = sum / kDraws;
  const double var = (sum_sq - kDraws * mean * mean) / (kDraws - 1);
  const double se = std::sqrt(var / kDraws);
  const double elapsed = seconds_since(t0);
  const double z = std::abs(mean - psi) / se;
  return {z <= kSigmas && elapsed <= kTimeLimit,
          "psi=" + fmt("%.6g", psi) + " mean=" + fmt("%.6g", mean) +
              " se=" + fmt("%.3g", se) + " |diff|/se=" + fmt("%.2f", z) +
              " time=" + fmt("%.2fs", elapsed)};
}

Outcome psd_suite() {
  constexpr double kMinEig = -1e-12;
  constexpr int kSystems = 100;
  std::mt19937_64 rng(31337);
  double worst_eig = 0.0, worst_asym = 0.0;
  for (int s = 0; s < kSystems; ++s) {
    const int n_z = lt::uniform_int(rng, 1, 2);
    const auto sys =
        lt::random_system(rng, n_z, lt::uniform_int(rng, 1, 2),
                          lt::uniform(rng, 0.2, 2.0), 2, s % 3 == 0,
                          lt::uniform_int(rng, 1, 3));
    const auto sc = stack_mimo(sys);
    const Matrix q_c = lt::random_spd(rng, n_z, 0.0);
    const auto method = static_cast<Method>(s % 3);
    SolverOptions o;
    o.method = method;
    o.n = 256;
    o.j = 8;
    const auto r = solve(sc, q_c, sc.g_c, sys.sample_time, o);
    std::vector<Matrix> mats{r.q, r.r_ww};
    const auto pk = propagate_covariance(lt::random_spd(rng, sc.n_x, 0.0),
                                         r.a, r.r_ww, 20);
    mats.insert(mats.end(), pk.begin(), pk.end());
    for (const auto& x : mats) {
      worst_eig = std::min(worst_eig, lt::min_eigenvalue(x));
      worst_asym = std::max(worst_asym, lt::asymmetry(x));
    }
  }
  return {worst_eig >= kMinEig && worst_asym == 0.0,
          "min eigenvalue=" + fmt("%.2e", worst_eig) +
              " max asymmetry=" + fmt("%.1e", worst_asym)};
}

Outcome mpc_properties() {
  constexpr double kEquilibriumTol = 1e-9;
  constexpr double kViolationTol = 1e-8;
  constexpr double kSettleLimit = 120.0;   // minutes
  constexpr double kSettleFraction = 0.01;

  const auto eq =
      scenario_from_json(load_json(data_path("cement_mill_equilibrium.json")));
  const auto eq_run =
      run_closed_loop(eq.scenario, eq.control_model, eq.plant_model);
  const double eq_dev = std::max(eq_run.summary.max_output_deviation,
                                 eq_run.summary.max_input_deviation);

  auto main =
      scenario_from_json(load_json(data_path("cement_mill_scenario.json")));
  main.scenario.settle_limit = kSettleLimit;
  main.scenario.settle_fraction = kSettleFraction;
  const auto run =
      run_closed_loop(main.scenario, main.control_model, main.plant_model);
  const auto& s = run.summary;

  bool settled = !s.events.empty();
  std::string events;
  for (const auto& ev : s.events) {
    settled = settled && ev.settled;
    events += " " + ev.kind + "@" + fmt("%.0f", ev.time) + "[";
    for (Eigen::Index i = 0; i < ev.settle.size(); ++i) {
      if (i > 0) events += ",";
      events += std::isnan(ev.settle(i)) ? std::string("never")
                                         : fmt("%.0f", ev.settle(i));
    }
    events += "]";
  }
  const bool pass = eq_dev <= kEquilibriumTol &&
                    s.max_violation <= kViolationTol && settled;
  return {pass, "equilibrium deviation=" + fmt("%.1e", eq_dev) +
                    " steps=" + std::to_string(run.record.t.size()) +
                    " max violation=" + fmt("%.1e", s.max_violation) +
                    " settling (min):" + events};
}

Outcome unconstrained_qp() {
  constexpr double kTol = 1e-8;
  constexpr int kProblems = 10;
  std::mt19937_64 rng(9001);
  double worst = 0.0;
  for (int t = 0; t < kProblems; ++t) {
    const auto n_x = lt::uniform_int(rng, 2, 3);
    const auto n_u = lt::uniform_int(rng, 1, 2);
    const int n = lt::uniform_int(rng, 4, 12);
    const Matrix a = lt::randn(rng, n_x, n_x, 0.6);
    const Matrix b = lt::randn(rng, n_x, n_u);
    const Matrix q = lt::random_spd(rng, n_x + n_u, 0.2);
    std::vector<Vector> q_k;
    for (int k = 0; k < n; ++k) q_k.push_back(lt::randn(rng, n_x + n_u, 1));
    const Vector x0 = lt::randn(rng, n_x, 1);

    auto qp = condense(a, b, q, q_k, x0, n);
    qp.bounds = InputBounds::uniform(n_u, 1e9, 1e9);
    const auto r = qp_solve(qp, Vector::Zero(n_u));
    const Matrix dp = lt::riccati_inputs(a, b, q, q_k, x0);
    worst = std::max(worst, lt::max_abs(r.u - dp.reshaped()));
  }
  return {worst <= kTol, "max |u_qp - u_dp|=" + fmt("%.2e", worst)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"discretization error vs matrix exponential (RK4, N=2^14)", table_errors},
      {"step doubling equals fixed stepping and is faster", doubling_equivalence},
      {"RK4 convergence order in Q", convergence_order},
      {"delay-free realization vs dense delayed ODE", realization},
      {"scalar integrator closed forms, all methods", closed_forms},
      {"stochastic cost vs Monte Carlo", monte_carlo},
      {"symmetry and PSD of Q, R_ww, P_k", psd_suite},
      {"closed-loop MPC properties", mpc_properties},
      {"unconstrained condensed QP vs Riccati", unconstrained_qp},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("criterion %zu: %s  %s  (%s)\n", i + 1,
                o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n",
              static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
