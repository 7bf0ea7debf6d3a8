#include "fplan/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <json.hpp>

#include "fplan/teacher.hpp"

namespace fplan {

double preview_distance(double ego_speed) {
  if (ego_speed < 0.0) throw std::invalid_argument("preview_distance: speed must be >= 0");
  return 0.5 * ego_speed + 2.5;
}

ControlCommand control_from_plan(const Trajectory& plan, const VehicleState& ego,
                                 const FactorizationConfig& cfg, const SimConfig& scfg) {
  const auto [path, vel] = factorize(plan, cfg);
  ControlCommand cmd;
  const int n_valid = path.valid_count();
  if (n_valid == 0) { // no usable geometry: straight, full braking
    cmd.steering = 0.0;
    cmd.accel = scfg.accel_min;
    return cmd;
  }

  const double target_d = preview_distance(ego.speed);
  int best_k = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_valid; ++k) {
    const double err = std::abs((k + 1) * path.ds - target_d);
    if (err < best_err) {
      best_err = err;
      best_k = k;
    }
  }
  const Vec2 preview = path.points.col(best_k);
  const double d_used = (best_k + 1) * path.ds;
  const double bearing = std::atan2(preview.y(), preview.x());
  cmd.steering = std::clamp(std::atan(2.0 * ego.wheelbase * std::sin(bearing) / d_used),
                            -scfg.steer_limit, scfg.steer_limit);
  cmd.accel = std::clamp(scfg.speed_gain * (vel.speeds[0] - ego.speed), scfg.accel_min,
                         scfg.accel_max);
  return cmd;
}

VehicleState step_dynamics(const VehicleState& state, const ControlCommand& cmd, double sim_dt) {
  VehicleState next = state;
  next.speed = std::max(0.0, state.speed + cmd.accel * sim_dt);
  next.heading = state.heading + (state.speed / state.wheelbase) * std::tan(cmd.steering) * sim_dt;
  const double mean_heading = 0.5 * (state.heading + next.heading);
  const double mean_speed = 0.5 * (state.speed + next.speed);
  next.position += mean_speed * sim_dt * Vec2(std::cos(mean_heading), std::sin(mean_heading));
  return next;
}

EpisodeReport run_episode(const ScenarioScript& script, const PlannerFn& planner,
                          const FactorizationConfig& cfg, const SimConfig& scfg) {
  const int steps_per_replan =
      std::max(1, static_cast<int>(std::lround(1.0 / (scfg.replan_hz * scfg.sim_dt))));
  const int total_steps = static_cast<int>(script.duration / scfg.sim_dt);

  VehicleState state;
  state.position = script.initial.ego.position;
  state.heading = script.initial.ego.heading;
  state.speed = script.initial.ego.speed;

  EpisodeReport report;
  report.steps.reserve(total_steps);
  ControlCommand cmd;
  int chosen_i = -1, chosen_j = -1;
  double speed_acc = 0.0;
  double t = 0.0;

  for (int step = 0; step < total_steps; ++step) {
    if (step % steps_per_replan == 0) {
      Scene scene = scene_at(script, t);
      scene.ego.position = state.position;
      scene.ego.heading = state.heading;
      scene.ego.speed = state.speed;
      PlanResult result;
      try {
        result = planner(to_ego_frame(scene));
      } catch (const std::exception& e) {
        throw std::runtime_error(std::string("run_episode: planner failed: ") + e.what());
      }
      VehicleState plan_frame = state;
      plan_frame.position = Vec2::Zero();
      plan_frame.heading = 0.0;
      cmd = control_from_plan(result.best, plan_frame, cfg, scfg);
      chosen_i = result.best_i;
      chosen_j = result.best_j;
    }

    state = step_dynamics(state, cmd, scfg.sim_dt);
    t += scfg.sim_dt;

    const Scene now = scene_at(script, std::min(t, script.duration));
    const OrientedBox ego_box{state.position, state.heading, script.initial.ego.length,
                              script.initial.ego.width};
    for (const auto& agent : now.agents) {
      if (oriented_rect_overlap(ego_box, {agent.position, agent.heading, agent.length, agent.width}))
        report.collision = true;
    }

    const double progress =
        (script.initial.corridor.project(state.position).s - script.ego_start_s) /
        script.route_length;
    report.completion = std::clamp(std::max(report.completion, progress), 0.0, 1.0);

    const double lat_accel = state.speed * state.speed *
                             std::abs(std::tan(cmd.steering)) / state.wheelbase;
    if (std::abs(cmd.accel) > 3.0 || lat_accel > 4.0) ++report.comfort_violations;
    speed_acc += state.speed;

    report.steps.push_back({t, state.position.x(), state.position.y(), state.heading, state.speed,
                            cmd.steering, cmd.accel, chosen_i, chosen_j});
  }
  report.mean_speed = total_steps > 0 ? speed_acc / total_steps : 0.0;
  return report;
}

std::string episode_to_json(const EpisodeReport& report) {
  nlohmann::json j;
  j["collision"] = report.collision;
  j["completion"] = report.completion;
  j["comfort_violations"] = report.comfort_violations;
  j["mean_speed"] = report.mean_speed;
  j["steps"] = static_cast<int>(report.steps.size());
  return j.dump();
}

std::string episode_trace_csv(const EpisodeReport& report) {
  std::string out = "t,x,y,heading,speed,steering,accel,chosen_i,chosen_j\n";
  char line[256];
  for (const auto& s : report.steps) {
    std::snprintf(line, sizeof(line), "%.3f,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%d\n", s.t, s.x, s.y,
                  s.heading, s.speed, s.steering, s.accel, s.chosen_i, s.chosen_j);
    out += line;
  }
  return out;
}

}  // namespace fplan
