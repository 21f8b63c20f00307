#include "lqdelay/closed_loop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>

#include "lqdelay/lq_api.hpp"
#include "lqdelay/transfer_function.hpp"

namespace lqd {

int ScenarioConfig::steps() const {
  return static_cast<int>(std::llround(sim_time / ts));
}

void ScenarioConfig::validate(Eigen::Index n_u, Eigen::Index n_z) const {
  if (!(ts > 0.0) || !(sim_time >= ts)) {
    throw std::invalid_argument("scenario: need ts > 0 and sim_time >= ts");
  }
  if (std::abs(sim_time / ts - steps()) > 1e-9 * steps()) {
    throw std::invalid_argument("scenario: sim_time must be a multiple of ts");
  }
  if (u_s.size() != n_u || z_s.size() != n_z) {
    throw std::invalid_argument("scenario: steady-state sizes do not match");
  }
  bounds.validate(n_u);
  for (const auto& w : disturbance) {
    if (w.t_start < 0.0 || w.t_end < w.t_start || w.t_end > sim_time) {
      throw std::invalid_argument("scenario: disturbance window outside run");
    }
  }
  for (const auto& e : reference_events) {
    if (e.time < 0.0 || e.time > sim_time) {
      throw std::invalid_argument("scenario: reference event outside run");
    }
    if (e.z_bar.size() != n_z) {
      throw std::invalid_argument("scenario: reference size mismatch");
    }
  }
  if (r_vv.rows() != n_z || r_vv.cols() != n_z) {
    throw std::invalid_argument("scenario: R_vv must be n_z x n_z");
  }
  if (q_c.rows() != n_z || q_c.cols() != n_z) {
    throw std::invalid_argument("scenario: Q_c must be n_z x n_z");
  }
  if (!(r_ww >= 0.0)) throw std::invalid_argument("scenario: R_ww < 0");
  if (!(model_noise_intensity >= 0.0)) {
    throw std::invalid_argument("scenario: model noise intensity < 0");
  }
  if (horizon < 1) throw std::invalid_argument("scenario: horizon < 1");
}

namespace {

double disturbance_at(const ScenarioConfig& sc, double t) {
  double d = 0.0;
  for (const auto& w : sc.disturbance) {
    if (t >= w.t_start && t < w.t_end) d += w.value;
  }
  return d;
}

Vector reference_at(const ScenarioConfig& sc, double t, Eigen::Index n_z) {
  Vector z = Vector::Zero(n_z);
  double latest = -std::numeric_limits<double>::infinity();
  for (const auto& e : sc.reference_events) {
    if (e.time <= t && e.time >= latest) {
      latest = e.time;
      z = e.z_bar;
    }
  }
  return z;
}

AugmentedDiscreteSystem realize(const StackedCoefficients& sc,
                                const DiscretizationResult& d) {
  return augment_discrete(d.a, d.b_o, sc.d_o, sc.c_c, sc.m_bar, sc.n_u);
}

}  // namespace

ClosedLoopResult run_closed_loop(const ScenarioConfig& scenario,
                                 const MimoDelaySystem& control_model,
                                 const MimoDelaySystem& plant_model,
                                 const SolverOptions& opts) {
  const auto n_u = control_model.inputs();
  const auto n_z = control_model.outputs();
  scenario.validate(n_u, n_z);
  if (plant_model.inputs() != n_u + 1 || plant_model.outputs() != n_z) {
    throw std::invalid_argument(
        "plant must have the control inputs plus one disturbance input");
  }
  if (std::abs(control_model.sample_time - scenario.ts) > 1e-12 ||
      std::abs(plant_model.sample_time - scenario.ts) > 1e-12) {
    throw std::invalid_argument("model and scenario sample times differ");
  }

  // Control model and its condensed QP.
  const auto sc_c = stack_mimo(control_model);
  const Matrix g_c = std::sqrt(scenario.model_noise_intensity) * sc_c.g_c;
  const auto disc_c = solve(sc_c, scenario.q_c, g_c, scenario.ts, opts);
  const auto aug_c = realize(sc_c, disc_c);
  const auto lin_c = to_linear_system(aug_c);
  const Matrix r_ww_c = pad_covariance(disc_c.r_ww, aug_c.states());

  // Plant simulator.
  const auto sc_p = stack_mimo(plant_model);
  const auto disc_p = solve_matrix_exp(
      sc_p, Matrix::Identity(n_z, n_z),
      Matrix::Zero(sc_p.n_x, 0), scenario.ts);
  const auto aug_p = realize(sc_p, disc_p);
  if (aug_c.d_tilde.cwiseAbs().maxCoeff() != 0.0 ||
      aug_p.d_tilde.cwiseAbs().maxCoeff() != 0.0) {
    throw std::invalid_argument(
        "closed loop requires no undelayed feedthrough");
  }

  const Condenser cond(aug_c.a_tilde, aug_c.b_tilde, disc_c.q,
                       scenario.horizon);
  CondensedQp qp;
  qp.h = cond.hessian();
  qp.ridge_applied = regularize(qp.h);
  qp.h_inv = spd_inverse(qp.h);
  qp.bounds = scenario.bounds;
  qp.horizon = scenario.horizon;
  qp.n_u = n_u;
  const Matrix ref_map = cond.stage_sum(disc_c.m);

  const int steps = scenario.steps();
  TrajectoryRecord rec;
  rec.t.resize(steps);
  rec.u.resize(n_u, steps);
  rec.z.resize(n_z, steps);
  rec.y.resize(n_z, steps);
  rec.z_bar.resize(n_z, steps);
  rec.d.resize(steps);

  std::mt19937_64 rng(scenario.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Matrix l_vv = scenario.r_vv.llt().matrixL();
  const double sd_w = std::sqrt(scenario.r_ww);

  Vector x_p = Vector::Zero(aug_p.states());
  KalmanState ks{Vector::Zero(aug_c.states()),
                 Matrix::Zero(aug_c.states(), aug_c.states())};
  ks.p.topLeftCorner(sc_c.n_x, sc_c.n_x).diagonal().setConstant(
      scenario.p0_scale);

  Vector u_prev = Vector::Zero(n_u);
  Vector warm = Vector::Zero(scenario.horizon * n_u);
  Vector plant_in(n_u + 1);
  Vector v(n_z);
  for (int k = 0; k < steps; ++k) {
    const double t = k * scenario.ts;
    double w = 0.0;
    v.setZero();
    if (scenario.noise) {
      w = sd_w * normal(rng);
      for (Eigen::Index i = 0; i < n_z; ++i) v(i) = normal(rng);
      v = l_vv * v;
    }
    const Vector z = aug_p.c_tilde * x_p;
    const Vector y = z + v;
    const Vector z_bar = reference_at(scenario, t, n_z);
    const double d = disturbance_at(scenario, t);

    ks = kalman_measurement_update(ks, u_prev, y, lin_c, scenario.r_vv);
    qp.g = cond.linear_term(ks.x_hat, {}) + ref_map * z_bar;
    QpResult sol;
    try {
      sol = qp_solve(qp, u_prev, warm);
    } catch (const std::exception& e) {
      throw std::runtime_error("QP failed at step " + std::to_string(k) +
                               ": " + e.what());
    }
    const Vector u = sol.u.head(n_u);
    warm.head(warm.size() - n_u) = sol.u.tail(warm.size() - n_u);
    warm.tail(n_u) = sol.u.tail(n_u);

    rec.t(k) = t;
    rec.u.col(k) = scenario.u_s + u;
    rec.z.col(k) = scenario.z_s + z;
    rec.y.col(k) = scenario.z_s + y;
    rec.z_bar.col(k) = scenario.z_s + z_bar;
    rec.d(k) = d;
    rec.qp_iterations.push_back(sol.iterations);
    rec.kkt_residuals.push_back(sol.kkt_residual);

    plant_in << u, d + w;
    x_p = aug_p.a_tilde * x_p + aug_p.b_tilde * plant_in;
    ks = kalman_time_update(ks, u, lin_c, r_ww_c);
    u_prev = u;
  }

  ClosedLoopResult out{std::move(rec), {}};
  out.summary = summarize(scenario, out.record);
  out.summary.ridge_applied = qp.ridge_applied;
  return out;
}

RunSummary summarize(const ScenarioConfig& scenario,
                     const TrajectoryRecord& rec) {
  RunSummary s;
  const auto steps = rec.t.size();
  const auto n_z = rec.z.rows();
  if (steps == 0) return s;
  const Matrix err = rec.z - rec.z_bar;
  const Matrix du = rec.u.colwise() - scenario.u_s;
  s.max_output_deviation = err.cwiseAbs().maxCoeff();
  s.max_input_deviation = du.cwiseAbs().maxCoeff();
  for (double r : rec.kkt_residuals) {
    s.max_kkt_residual = std::max(s.max_kkt_residual, r);
  }

  const auto& b = scenario.bounds;
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Vector u = du.col(k);
    const Vector prev = k > 0 ? Vector(du.col(k - 1)) : Vector::Zero(u.size());
    const Vector step = u - prev;
    s.max_violation = std::max(
        {s.max_violation, (b.u_min - u).maxCoeff(), (u - b.u_max).maxCoeff(),
         (b.du_min - step).maxCoeff(), (step - b.du_max).maxCoeff()});
  }

  std::vector<std::pair<double, std::string>> times;
  for (const auto& w : scenario.disturbance) {
    times.emplace_back(w.t_start, "disturbance_on");
    if (w.t_end < scenario.sim_time) {
      times.emplace_back(w.t_end, "disturbance_off");
    }
  }
  for (const auto& e : scenario.reference_events) {
    times.emplace_back(e.time, "reference");
  }
  std::stable_sort(times.begin(), times.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  for (std::size_t i = 0; i < times.size(); ++i) {
    EventSummary ev;
    ev.kind = times[i].second;
    ev.time = times[i].first;
    const double t_next =
        i + 1 < times.size() ? times[i + 1].first : scenario.sim_time;
    ev.peak = Vector::Zero(n_z);
    ev.settle = Vector::Constant(n_z, std::numeric_limits<double>::quiet_NaN());
    Eigen::Index k0 = steps, k1 = steps;
    for (Eigen::Index k = 0; k < steps; ++k) {
      if (k0 == steps && rec.t(k) >= ev.time) k0 = k;
      if (rec.t(k) >= t_next) {
        k1 = k;
        break;
      }
    }
    ev.settled = k0 < k1;
    for (Eigen::Index r = 0; r < n_z && k0 < k1; ++r) {
      for (Eigen::Index k = k0; k < k1; ++k) {
        ev.peak(r) = std::max(ev.peak(r), std::abs(err(r, k)));
      }
      const double band = scenario.settle_fraction * ev.peak(r);
      Eigen::Index last_out = k0 - 1;
      for (Eigen::Index k = k0; k < k1; ++k) {
        if (std::abs(err(r, k)) > band) last_out = k;
      }
      if (ev.peak(r) == 0.0) {
        ev.settle(r) = 0.0;
      } else if (last_out + 1 < k1) {
        ev.settle(r) = rec.t(last_out + 1) - ev.time;
      }
      if (!(ev.settle(r) <= scenario.settle_limit)) ev.settled = false;
    }
    s.events.push_back(std::move(ev));
  }
  return s;
}

MimoDelaySystem cement_mill_control_model(double ts) {
  MimoDelaySystem sys;
  sys.sample_time = ts;
  using TF = TransferFunction;
  sys.channels = {
      {tf_realize(TF::first_order(12.8, 16.7, 1.0)),
       tf_realize(TF::first_order(-18.9, 21.0, 3.0))},
      {tf_realize(TF::first_order(6.6, 10.9, 7.0)),
       tf_realize(TF::first_order(-19.4, 14.4, 3.0))}};
  // Integrating noise model 1 / (s (10 s + 1)) on each output.
  const TF noise{{1.0}, {10.0, 1.0, 0.0}, 0.0};
  sys.noise_channels = {noise_channel_from_tf(noise, 0),
                        noise_channel_from_tf(noise, 1)};
  return sys;
}

MimoDelaySystem cement_mill_plant_model(double ts) {
  auto sys = cement_mill_control_model(ts);
  sys.noise_channels.clear();
  using TF = TransferFunction;
  sys.channels[0].push_back(tf_realize(TF::second_order(-1.0, 32.0, 21.0, 3.0)));
  sys.channels[1].push_back(tf_realize(TF::second_order(60.0, 30.0, 20.0)));
  return sys;
}

ScenarioConfig cement_mill_scenario() {
  ScenarioConfig sc;
  sc.name = "cement_mill";
  sc.sim_time = 720.0;
  sc.ts = 2.0;
  sc.u_s = Vector(2);
  sc.u_s << 128.0, 60.0;
  sc.z_s = Vector(2);
  sc.z_s << 25.0, 3100.0;
  sc.disturbance = {{180.0, 540.0, 20.0}};
  Vector step(2);
  step << 1.0, 50.0;
  sc.reference_events = {{360.0, step}};
  sc.bounds = InputBounds::uniform(2, 20.0, 2.0);
  sc.r_ww = 1.0;
  sc.r_vv = Vector((Vector(2) << 0.1, 50.0).finished()).asDiagonal();
  sc.noise = true;
  sc.seed = 42;
  sc.horizon = 100;
  sc.q_c = Matrix::Identity(2, 2);
  return sc;
}

}  // namespace lqd
