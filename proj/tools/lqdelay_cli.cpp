// Command-line front end: discretize, validate, bench, simulate.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Eigenvalues>

#include "lqdelay/closed_loop.hpp"
#include "lqdelay/io.hpp"
#include "lqdelay/lq_api.hpp"
#include "lqdelay/ode_rhs.hpp"
#include "lqdelay/solvers.hpp"

namespace {

using namespace lqd;

struct CommonFlags {
  std::string input;
  std::string output;
  std::string method = "expm";
  long long n = 1LL << 14;
  int j = 14;
  std::string tableau = "rk4";
  std::uint64_t seed = 1;
  bool seed_set = false;
};

SolverOptions solver_options(const CommonFlags& f) {
  SolverOptions o;
  o.method = method_from_string(f.method);
  o.n = f.n;
  o.j = f.j;
  o.tableau = tableau_by_name(f.tableau);
  return o;
}

std::ostream& open_output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw std::runtime_error(path + ": cannot open for writing");
  return file;
}

double min_eigenvalue(const Matrix& x) {
  if (x.size() == 0) return 0.0;
  return Eigen::SelfAdjointEigenSolver<Matrix>(symmetrize(x),
                                               Eigen::EigenvaluesOnly)
      .eigenvalues()
      .minCoeff();
}

int run_discretize(const CommonFlags& f, bool stochastic,
                   const std::string& dump_dir) {
  const auto problem = problem_from_json(load_json(f.input));
  const auto d = discretize(problem, solver_options(f), stochastic);
  Json out = discretization_to_json(d.disc, d.sys);
  Json qk = Json::array();
  for (const auto& q : d.q_k) qk.push_back(vector_to_json(q));
  out["q_k"] = qk;
  out["rho_k"] = d.rho_k;
  if (stochastic) out["rho_s_k"] = d.rho_s_k;
  std::ofstream file;
  open_output(f.output, file) << std::setprecision(17) << out.dump(2) << '\n';
  if (!dump_dir.empty()) {
    std::filesystem::create_directories(dump_dir);
    const std::vector<std::pair<std::string, const Matrix*>> mats = {
        {"a", &d.disc.a},         {"b_o", &d.disc.b_o},
        {"q", &d.disc.q},         {"m", &d.disc.m},
        {"r_ww", &d.disc.r_ww},   {"a_tilde", &d.sys.a_tilde},
        {"b_tilde", &d.sys.b_tilde}, {"c_tilde", &d.sys.c_tilde}};
    for (const auto& [name, m] : mats) {
      std::ofstream csv(dump_dir + "/" + name + ".csv");
      if (!csv) throw std::runtime_error(dump_dir + ": cannot write");
      write_matrix_csv(csv, *m);
    }
  }
  return 0;
}

struct Check {
  std::string name;
  double value;
  double tol;
  [[nodiscard]] bool pass() const { return value <= tol; }
};

int run_validate(const CommonFlags& f, int log2_n) {
  const auto problem = problem_from_json(load_json(f.input));
  const auto sc = stack_mimo(problem.system);
  const double ts = problem.system.sample_time;
  const auto& q_c = problem.q_c;
  const auto tab = tableau_by_name(f.tableau);

  const auto ref = solve_matrix_exp(sc, q_c, sc.g_c, ts);
  const auto fixed = solve_fixed_step(sc, q_c, sc.g_c, ts, 1LL << log2_n, tab);
  const auto dbl = solve_step_doubling(sc, q_c, sc.g_c, ts, log2_n, tab);
  const auto direct = integrate_direct(sc, q_c, sc.g_c, ts, 1 << log2_n);

  auto worst = [](const DiscretizationResult& x, const DiscretizationResult& y) {
    return std::max({relative_difference(x.a, y.a),
                     relative_difference(x.b_o, y.b_o),
                     relative_difference(x.q, y.q),
                     relative_difference(x.m, y.m),
                     relative_difference(x.r_ww, y.r_ww)});
  };
  const double direct_err = std::max(
      {relative_difference(direct.a_t, ref.a),
       relative_difference(direct.b_o(), ref.b_o),
       relative_difference(direct.q_t, ref.q),
       relative_difference(direct.m_t, ref.m),
       relative_difference(direct.r_ww_t, ref.r_ww)});

  // Realization against the dense delayed-ODE integration.
  const auto sys = augment_discrete(ref.a, ref.b_o, sc.d_o, sc.c_c, sc.m_bar,
                                    sc.n_u);
  std::mt19937_64 rng(f.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Matrix u(sc.n_u, 50);
  for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = unif(rng);
  const Matrix z_disc = simulate_augmented(sys, u);
  const Matrix z_dense = dense_reference_sim(problem.system, u, 400);
  const double real_err = (z_disc - z_dense).cwiseAbs().maxCoeff() /
                          std::max(1.0, z_dense.cwiseAbs().maxCoeff());

  const double q_scale = std::max(1.0, ref.q.cwiseAbs().maxCoeff());
  const double r_scale = std::max(1.0, ref.r_ww.cwiseAbs().maxCoeff());
  const std::vector<Check> checks = {
      {"fixed_step_vs_expm_rel", worst(fixed, ref), 1e-8},
      {"doubling_vs_fixed_step_rel", worst(dbl, fixed), 1e-12},
      {"direct_rk4_vs_expm_rel", direct_err, 1e-8},
      {"q_symmetry", (ref.q - ref.q.transpose()).cwiseAbs().maxCoeff(), 0.0},
      {"r_ww_symmetry",
       (ref.r_ww - ref.r_ww.transpose()).cwiseAbs().maxCoeff(), 0.0},
      {"q_min_eig_neg", -min_eigenvalue(ref.q) / q_scale, 1e-12},
      {"r_ww_min_eig_neg", -min_eigenvalue(ref.r_ww) / r_scale, 1e-12},
      {"realization_vs_dense_rel", real_err, 1e-6},
  };
  bool ok = true;
  std::cout << std::left << std::setw(30) << "check" << std::setw(14)
            << "value" << std::setw(10) << "tol" << "result\n";
  for (const auto& c : checks) {
    ok = ok && c.pass();
    std::cout << std::left << std::setw(30) << c.name << std::setw(14)
              << std::setprecision(3) << std::scientific << c.value
              << std::setw(10) << c.tol << (c.pass() ? "PASS" : "FAIL")
              << '\n';
  }
  return ok ? 0 : 1;
}

struct Timed {
  DiscretizationResult result;
  double median_seconds = 0.0;
};

Timed timed_solve(const StackedCoefficients& sc, const Matrix& q_c,
                  double ts, const SolverOptions& opts, int repeats) {
  Timed t;
  std::vector<double> secs;
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    t.result = solve(sc, q_c, sc.g_c, ts, opts);
    secs.push_back(std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start)
                       .count());
  }
  std::sort(secs.begin(), secs.end());
  t.median_seconds = secs[secs.size() / 2];
  return t;
}

int bench_threads() {
  const char* env = std::getenv("LQDELAY_BENCH_THREADS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return n < 1 ? 1 : n;
}

int run_bench(const CommonFlags& f, int n_exponent, int repeats) {
  const auto problem = problem_from_json(load_json(f.input));
  const auto sc = stack_mimo(problem.system);
  const double ts = problem.system.sample_time;

  SolverOptions expm_opts, ode_opts, dbl_opts;
  expm_opts.method = Method::MatrixExp;
  ode_opts.method = Method::FixedStep;
  ode_opts.n = 1LL << n_exponent;
  ode_opts.tableau = tableau_by_name(f.tableau);
  dbl_opts.method = Method::StepDoubling;
  dbl_opts.j = n_exponent;
  dbl_opts.tableau = ode_opts.tableau;

  const std::vector<SolverOptions> runs = {expm_opts, ode_opts, dbl_opts};
  std::vector<Timed> timed(runs.size());
  if (bench_threads() > 1) {
    std::vector<std::future<Timed>> futures;
    for (const auto& o : runs) {
      futures.push_back(std::async(std::launch::async, timed_solve,
                                   std::cref(sc), std::cref(problem.q_c), ts,
                                   o, repeats));
    }
    for (std::size_t i = 0; i < runs.size(); ++i) timed[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < runs.size(); ++i) {
      timed[i] = timed_solve(sc, problem.q_c, ts, runs[i], repeats);
    }
  }

  const auto& ref = timed[0].result;
  std::vector<MethodErrors> errs;
  for (const auto& t : timed) errs.push_back(errors_against(t.result, ref));
  const auto& fx = timed[1].result;
  const auto& db = timed[2].result;
  const double equal = std::max({relative_difference(db.a, fx.a),
                                 relative_difference(db.b_o, fx.b_o),
                                 relative_difference(db.r_ww, fx.r_ww),
                                 relative_difference(db.m, fx.m),
                                 relative_difference(db.q, fx.q)});

  std::ofstream file;
  auto& os = open_output(f.output, file);
  os << "quantity,unit,matrix_exp,ode,step_doubling\n";
  auto row = [&](const char* name, double MethodErrors::*field) {
    os << name << ",-";
    for (const auto& e : errs) os << ',' << format_double(e.*field);
    os << '\n';
  };
  row("e(A)", &MethodErrors::a);
  row("e(B_o)", &MethodErrors::b_o);
  row("e(R_ww)", &MethodErrors::r_ww);
  row("e(M)", &MethodErrors::m);
  row("e(Q)", &MethodErrors::q);
  os << "cpu_time,s";
  for (const auto& t : timed) os << ',' << format_double(t.median_seconds);
  os << '\n';

  const bool self_zero = errs[0].a == 0.0 && errs[0].b_o == 0.0 &&
                         errs[0].r_ww == 0.0 && errs[0].m == 0.0 &&
                         errs[0].q == 0.0;
  const bool ok = self_zero && equal <= 1e-12;
  std::cerr << "N = 2^" << n_exponent << ", tableau " << f.tableau
            << ", median of " << repeats << " runs\n"
            << "doubling vs fixed-step max relative difference: " << equal
            << (equal <= 1e-12 ? " (ok)" : " (FAIL)") << '\n'
            << "speedup fixed-step / doubling: "
            << timed[1].median_seconds / timed[2].median_seconds << '\n';
  return ok ? 0 : 1;
}

int run_simulate(const CommonFlags& f, const std::string& summary_path,
                 bool no_noise) {
  auto bundle = scenario_from_json(load_json(f.input));
  if (f.seed_set) bundle.scenario.seed = f.seed;
  if (no_noise) bundle.scenario.noise = false;
  const auto res = run_closed_loop(bundle.scenario, bundle.control_model,
                                   bundle.plant_model, solver_options(f));
  std::ofstream file;
  write_trajectory_csv(open_output(f.output, file), res.record);
  const Json summary = summary_to_json(res.summary);
  if (!summary_path.empty()) {
    std::ofstream s(summary_path);
    if (!s) throw std::runtime_error(summary_path + ": cannot write");
    s << summary.dump(2) << '\n';
  }
  std::cerr << "steps: " << res.record.t.size() << '\n'
            << "max constraint violation: " << res.summary.max_violation
            << '\n'
            << "max |z - zbar|: " << res.summary.max_output_deviation << '\n';
  for (const auto& e : res.summary.events) {
    std::cerr << e.kind << " at t = " << e.time << ": peak "
              << e.peak.transpose() << ", settle " << e.settle.transpose()
              << (e.settled ? "" : " (not settled)") << '\n';
  }
  return res.summary.max_violation <= 1e-8 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discretization of delayed linear-quadratic control problems"};
  app.require_subcommand(1);

  CommonFlags f;
  auto add_solver_flags = [&f](CLI::App* cmd) {
    cmd->add_option("--method", f.method, "ode, expm or doubling")
        ->check(CLI::IsMember({"ode", "expm", "doubling", "fixed_step",
                               "matrix_exp", "step_doubling"}));
    cmd->add_option("--n", f.n, "fixed-step count")->check(CLI::PositiveNumber);
    cmd->add_option("--j", f.j, "step-doubling passes (N = 2^j)")
        ->check(CLI::Range(0, 62));
    cmd->add_option("--tableau", f.tableau, "Butcher tableau")
        ->check(CLI::IsMember(tableau_names()));
  };

  auto* disc = app.add_subcommand("discretize", "discretize an LQ problem");
  disc->add_option("input", f.input, "problem JSON")->required();
  disc->add_option("--out,-o", f.output, "result JSON (default stdout)");
  add_solver_flags(disc);
  bool stochastic = false;
  std::string dump_dir;
  disc->add_flag("--stochastic", stochastic, "include covariance terms");
  disc->add_option("--dump-dir", dump_dir, "also write matrices as CSV");

  auto* val = app.add_subcommand("validate", "check solvers against oracles");
  val->add_option("input", f.input, "problem JSON")->required();
  val->add_option("--tableau", f.tableau)->check(CLI::IsMember(tableau_names()));
  int log2_n = 10;
  val->add_option("--j", log2_n, "N = 2^j steps for the ODE methods")
      ->check(CLI::Range(1, 20));
  val->add_option("--seed", f.seed, "seed for the random input sequence");

  auto* bench = app.add_subcommand("bench", "error and timing table");
  bench->add_option("input", f.input, "problem JSON")->required();
  bench->add_option("--out,-o", f.output, "CSV (default stdout)");
  bench->add_option("--tableau", f.tableau)
      ->check(CLI::IsMember(tableau_names()));
  int n_exponent = 14, repeats = 5;
  bench->add_option("--j", n_exponent, "N = 2^j")->check(CLI::Range(0, 24));
  bench->add_option("--repeats", repeats, "timing repeats (median)")
      ->check(CLI::PositiveNumber);
  bench->footer("Threads: LQDELAY_BENCH_THREADS (default 1).");

  auto* sim = app.add_subcommand("simulate", "closed-loop MPC scenario");
  sim->add_option("input", f.input, "scenario JSON")->required();
  sim->add_option("--out,-o", f.output, "trajectory CSV (default stdout)");
  std::string summary_path;
  bool no_noise = false;
  sim->add_option("--summary", summary_path, "summary JSON");
  sim->add_option("--seed", f.seed, "override the scenario seed")
      ->each([&f](const std::string&) { f.seed_set = true; });
  sim->add_flag("--no-noise", no_noise, "disable process and measurement noise");
  add_solver_flags(sim);

  CLI11_PARSE(app, argc, argv);

  try {
    if (disc->parsed()) return run_discretize(f, stochastic, dump_dir);
    if (val->parsed()) return run_validate(f, log2_n);
    if (bench->parsed()) return run_bench(f, n_exponent, repeats);
    if (sim->parsed()) return run_simulate(f, summary_path, no_noise);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
