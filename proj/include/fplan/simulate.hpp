#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fplan/pipeline.hpp"
#include "fplan/scene.hpp"
#include "fplan/trajectory.hpp"

namespace fplan {

struct VehicleState {
  Vec2 position = Vec2::Zero();
  double heading = 0.0;
  double speed = 0.0;
  double wheelbase = 2.7;
};

struct ControlCommand {
  double steering = 0.0; // rad, |steering| <= limit
  double accel = 0.0;    // m/s^2, within [accel_min, accel_max]
};

struct SimConfig {
  double replan_hz = 2.0;
  double sim_dt = 0.1;
  double steer_limit = 0.6;
  double accel_min = -6.0;
  double accel_max = 3.0;
  double speed_gain = 1.5; // s^-1 proportional speed tracking
};

// Speed-dependent preview distance d = 0.5 * v + 2.5.
double preview_distance(double ego_speed);

// Pure-pursuit steering toward the path point whose cumulative distance is
// closest to the preview distance; the profile's first velocity is the speed
// target. A fully masked path brakes straight.
ControlCommand control_from_plan(const Trajectory& plan, const VehicleState& ego,
                                 const FactorizationConfig& cfg, const SimConfig& scfg);

// Kinematic bicycle: speed clamps at zero, heading advances by
// (v / wheelbase) tan(steering) dt, position steps along the mean heading at
// the mean speed.
VehicleState step_dynamics(const VehicleState& state, const ControlCommand& cmd, double sim_dt);

struct SimStepLog {
  double t = 0.0, x = 0.0, y = 0.0, heading = 0.0, speed = 0.0;
  double steering = 0.0, accel = 0.0;
  int chosen_i = -1, chosen_j = -1;
};

struct EpisodeReport {
  bool collision = false;
  double completion = 0.0; // monotone max of route progress, in [0, 1]
  int comfort_violations = 0;
  double mean_speed = 0.0;
  std::vector<SimStepLog> steps;
};

using PlannerFn = std::function<PlanResult(const Scene& ego_scene)>;

// Closed loop: replan at replan_hz, hold the converted command between
// replans, step dynamics at sim_dt, check collisions each step.
EpisodeReport run_episode(const ScenarioScript& script, const PlannerFn& planner,
                          const FactorizationConfig& cfg, const SimConfig& scfg);

std::string episode_to_json(const EpisodeReport& report);
std::string episode_trace_csv(const EpisodeReport& report);

}  // namespace fplan
