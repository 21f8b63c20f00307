#include <doctest.h>

#include <cmath>

#include "lqdelay/closed_loop.hpp"
#include "support.hpp"

using namespace lqd;
using lqd::testing::max_abs;

namespace {

ScenarioConfig quiet(double sim_time) {
  auto sc = cement_mill_scenario();
  sc.sim_time = sim_time;
  sc.disturbance.clear();
  sc.reference_events.clear();
  sc.noise = false;
  return sc;
}

ClosedLoopResult run(const ScenarioConfig& sc) {
  return run_closed_loop(sc, cement_mill_control_model(sc.ts),
                         cement_mill_plant_model(sc.ts));
}

}  // namespace

TEST_CASE("cement mill models have the expected shape") {
  const auto control = cement_mill_control_model(2.0);
  const auto plant = cement_mill_plant_model(2.0);
  CHECK(control.outputs() == 2);
  CHECK(control.inputs() == 2);
  CHECK(plant.outputs() == 2);
  CHECK(plant.inputs() == 3);
  CHECK(control.noise_channels.size() == 2);
  const auto sc = cement_mill_scenario();
  CHECK(sc.steps() == 360);
  CHECK_NOTHROW(sc.validate(2, 2));
}

TEST_CASE("equilibrium stays at steady state") {
  const auto sc = quiet(120.0);
  const auto res = run(sc);
  const auto& rec = res.record;
  REQUIRE(rec.t.size() == 60);
  for (Eigen::Index k = 0; k < rec.t.size(); ++k) {
    CHECK(max_abs(rec.u.col(k) - sc.u_s) <= 1e-9);
    CHECK(max_abs(rec.z.col(k) - sc.z_s) <= 1e-9);
  }
  CHECK(res.summary.max_output_deviation <= 1e-9);
  CHECK(res.summary.max_input_deviation <= 1e-9);
}

TEST_CASE("constant feasible disturbance is rejected without offset") {
  auto sc = quiet(2400.0);
  sc.disturbance.push_back({10.0, 2400.0, 0.05});
  const auto res = run(sc);
  const auto& rec = res.record;
  const auto last = rec.t.size() - 1;
  Eigen::Index peak_at = 0;
  const Matrix err = (rec.z - rec.z_bar).cwiseAbs();
  const double peak = err.maxCoeff(&peak_at, &peak_at);
  CHECK(peak > 1e-3);
  CHECK(err.col(last).maxCoeff() <= 1e-3 * peak);
  CHECK(res.summary.max_violation <= 1e-8);
}

TEST_CASE("same seed gives an identical record") {
  auto sc = cement_mill_scenario();
  sc.sim_time = 100.0;
  sc.disturbance = {{20.0, 80.0, 5.0}};
  sc.reference_events = {{50.0, (Vector(2) << 1.0, 50.0).finished()}};
  const auto a = run(sc).record;
  const auto b = run(sc).record;
  CHECK(a.u == b.u);
  CHECK(a.z == b.z);
  CHECK(a.y == b.y);
  CHECK(a.z_bar == b.z_bar);
  sc.seed += 1;
  const auto c = run(sc).record;
  CHECK(max_abs(a.y - c.y) > 0.0);
}

TEST_CASE("applied inputs respect the bounds with noise and events") {
  auto sc = cement_mill_scenario();
  sc.sim_time = 200.0;
  sc.disturbance = {{20.0, 160.0, 20.0}};
  sc.reference_events = {{100.0, (Vector(2) << 1.0, 50.0).finished()}};
  const auto res = run(sc);
  CHECK(res.summary.max_violation <= 1e-8);
  CHECK(res.summary.max_kkt_residual <= 1e-8);
  const Matrix du = res.record.u - sc.u_s.replicate(1, res.record.u.cols());
  CHECK(du.cwiseAbs().maxCoeff() <= 20.0 + 1e-8);
}

TEST_CASE("summary finds events, peaks and settling times") {
  ScenarioConfig sc;
  sc.sim_time = 20.0;
  sc.ts = 1.0;
  sc.u_s = Vector::Zero(1);
  sc.z_s = Vector::Zero(1);
  sc.disturbance = {{5.0, 20.0, 1.0}};
  sc.settle_limit = 6.0;
  sc.settle_fraction = 0.1;
  sc.bounds = InputBounds::uniform(1, 10.0, 10.0);
  TrajectoryRecord rec;
  rec.t = Vector::LinSpaced(20, 0.0, 19.0);
  rec.u = Matrix::Zero(1, 20);
  rec.z = Matrix::Zero(1, 20);
  rec.z_bar = Matrix::Zero(1, 20);
  rec.y = rec.z;
  rec.d = Vector::Zero(20);
  rec.z(0, 6) = 2.0;
  rec.z(0, 7) = -1.0;
  rec.z(0, 8) = 0.5;
  rec.z(0, 9) = 0.1;
  rec.qp_iterations.assign(20, 1);
  rec.kkt_residuals.assign(20, 0.0);
  const auto s = summarize(sc, rec);
  REQUIRE(s.events.size() == 1);
  CHECK(s.events[0].kind == "disturbance_on");
  CHECK(s.events[0].peak(0) == 2.0);
  // Within 0.2 of zero from t = 9 on.
  CHECK(s.events[0].settle(0) == doctest::Approx(4.0));
  CHECK(s.events[0].settled);
  CHECK(s.max_output_deviation == 2.0);

  rec.z(0, 15) = 1.0;
  const auto late = summarize(sc, rec);
  CHECK(late.events[0].settle(0) == doctest::Approx(11.0));
  CHECK_FALSE(late.events[0].settled);
}

TEST_CASE("scenario validation") {
  auto sc = cement_mill_scenario();
  sc.disturbance.push_back({100.0, 10000.0, 1.0});
  CHECK_THROWS(sc.validate(2, 2));
  sc = cement_mill_scenario();
  sc.sim_time = 7.0;
  CHECK_THROWS(sc.validate(2, 2));
  sc = cement_mill_scenario();
  sc.r_vv = Matrix::Identity(3, 3);
  CHECK_THROWS(sc.validate(2, 2));
  sc = cement_mill_scenario();
  sc.bounds.du_min(0) = 5.0;
  CHECK_THROWS(sc.validate(2, 2));
  sc = cement_mill_scenario();
  sc.u_s = Vector::Zero(3);
  CHECK_THROWS(run(sc));
}
