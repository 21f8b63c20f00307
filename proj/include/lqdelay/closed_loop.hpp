#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lqdelay/delay_model.hpp"
#include "lqdelay/mpc.hpp"
#include "lqdelay/solvers.hpp"

namespace lqd {

/// Constant disturbance on [t_start, t_end), times in minutes.
struct DisturbanceWindow {
  double t_start = 0.0;
  double t_end = 0.0;
  double value = 0.0;
};

/// From `time` on, the reference (deviation from z_s) is `z_bar`.
struct ReferenceEvent {
  double time = 0.0;
  Vector z_bar;
};

struct ScenarioConfig {
  std::string name = "scenario";
  double sim_time = 720.0;  // minutes
  double ts = 2.0;
  Vector u_s;
  Vector z_s;
  std::vector<DisturbanceWindow> disturbance;
  std::vector<ReferenceEvent> reference_events;
  InputBounds bounds;
  double r_ww = 1.0;  // variance of the noise added to the disturbance input
  Matrix r_vv;        // measurement noise covariance
  bool noise = true;
  std::uint64_t seed = 1;
  int horizon = 100;
  Matrix q_c;
  double p0_scale = 1.0;  // initial filter covariance on model states
  double model_noise_intensity = 1.0;  // scales the control model's G_c G_c'
  double settle_limit = 120.0;
  double settle_fraction = 0.01;

  [[nodiscard]] int steps() const;
  void validate(Eigen::Index n_u, Eigen::Index n_z) const;
};

struct TrajectoryRecord {
  Vector t;      // minutes
  Matrix u;      // n_u x K, absolute
  Matrix z;      // n_z x K, absolute, noise free
  Matrix y;      // n_z x K, absolute, measured
  Matrix z_bar;  // n_z x K, absolute
  Vector d;      // nominal disturbance
  std::vector<int> qp_iterations;
  std::vector<double> kkt_residuals;
};

struct EventSummary {
  std::string kind;  // "disturbance_on", "disturbance_off", "reference"
  double time = 0.0;
  Vector peak;        // per output, max |z - zbar| until the next event
  Vector settle;      // per output, minutes after the event; NaN if never
  bool settled = false;
};

struct RunSummary {
  std::vector<EventSummary> events;
  double max_output_deviation = 0.0;  // max |z - zbar| over the run
  double max_input_deviation = 0.0;   // max |u - u_s| over the run
  double max_violation = 0.0;         // box and rate rows, applied inputs
  double max_kkt_residual = 0.0;
  bool ridge_applied = false;
};

struct ClosedLoopResult {
  TrajectoryRecord record;
  RunSummary summary;
};

/**
 * Runs MPC + Kalman filter against a plant simulator. The plant's inputs are
 * the control model's inputs followed by one disturbance input; its
 * outputs match the control model's. Process noise with variance `r_ww` is
 * added to the disturbance input and held over each sample.
 */
ClosedLoopResult run_closed_loop(const ScenarioConfig& scenario,
                                 const MimoDelaySystem& control_model,
                                 const MimoDelaySystem& plant_model,
                                 const SolverOptions& opts = {});

RunSummary summarize(const ScenarioConfig& scenario,
                     const TrajectoryRecord& rec);

// Cement mill: u = [feed flow, separator speed], z = [elevator load,
// fineness], d = clinker hardness. Times in minutes.
MimoDelaySystem cement_mill_control_model(double ts = 2.0);
MimoDelaySystem cement_mill_plant_model(double ts = 2.0);
ScenarioConfig cement_mill_scenario();

}  // namespace lqd
