#include "fplan/expert.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "fplan/io.hpp"

namespace fplan {

namespace {

double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

// Lateral offset profile around the nearest static blocker ahead: ramp out,
// hold beside it, ramp back. Slopes are sized to keep lateral accel small.
struct OffsetPlan {
  bool active = false;
  double s_blocker = 0.0;
  double offset = 0.0;
};

OffsetPlan plan_offset(const ScenarioScript& script) {
  OffsetPlan plan;
  const auto& corridor = script.initial.corridor;
  double nearest = std::numeric_limits<double>::infinity();
  const double s_ego = corridor.project(script.initial.ego.position).s;
  for (const auto& agent : script.initial.agents) {
    const bool is_static = agent.behavior == AgentBehavior::kConstantVelocity && agent.speed == 0.0;
    if (!is_static) continue;
    const auto proj = corridor.project(agent.position);
    if (proj.s <= s_ego || proj.s - s_ego > 80.0) continue;
    if (std::abs(proj.lateral) > corridor.half_width) continue;
    if (proj.s < nearest) {
      nearest = proj.s;
      plan.active = true;
      plan.s_blocker = proj.s;
      const double side = proj.lateral > 0.0 ? -1.0 : 1.0;
      plan.offset = proj.lateral + side * 2.4;
    }
  }
  return plan;
}

double offset_at(const OffsetPlan& plan, double s) {
  if (!plan.active) return 0.0;
  const double in = smoothstep((s - (plan.s_blocker - 24.0)) / 18.0);
  const double out = smoothstep((s - (plan.s_blocker + 8.0)) / 18.0);
  return plan.offset * (in - out);
}

double corridor_curvature(const DrivableCorridor& corridor, double s) {
  const double h = 1.0;
  const Vec2 t0 = corridor.tangent_at(std::max(0.0, s - h));
  const Vec2 t1 = corridor.tangent_at(std::min(corridor.length(), s + h));
  const double dtheta = std::atan2(t0.x() * t1.y() - t0.y() * t1.x(), t0.dot(t1));
  return std::abs(dtheta) / (2.0 * h);
}

}  // namespace

ExpertTrace expert_rollout(const ScenarioScript& script, double sim_dt) {
  return expert_rollout_from(script, 0.0,
                             script.initial.corridor.project(script.initial.ego.position).s,
                             script.initial.ego.speed, sim_dt);
}

ExpertTrace expert_rollout_from(const ScenarioScript& script, double t_start, double s_start,
                                double v_start, double sim_dt) {
  const auto& corridor = script.initial.corridor;
  const auto offset_plan = plan_offset(script);
  const double cruise = script.initial.ego.speed;
  const double ego_len = script.initial.ego.length;

  double s = s_start;
  double v = v_start;
  double a = 0.0;

  ExpertTrace trace;
  const int n = static_cast<int>((script.duration - t_start) / sim_dt) + 1;
  trace.time.reserve(n);
  trace.position.reserve(n);
  trace.heading.reserve(n);
  trace.speed.reserve(n);

  for (int i = 0; i < n; ++i) {
    const double t = t_start + i * sim_dt;

    const Vec2 tangent = corridor.tangent_at(s);
    const Vec2 normal(-tangent.y(), tangent.x());
    const double o = offset_at(offset_plan, s);
    const Vec2 pos = corridor.point_at(s) + o * normal;
    // Heading includes the offset slope.
    const double slope = (offset_at(offset_plan, s + 0.5) - offset_at(offset_plan, s - 0.5));
    const double heading = std::atan2(tangent.y(), tangent.x()) + std::atan(slope);
    trace.time.push_back(t);
    trace.position.push_back(pos);
    trace.heading.push_back(heading);
    trace.speed.push_back(v);

    // Desired speed: cruise capped by upcoming curvature.
    const double lookahead_curv = corridor_curvature(corridor, s + std::max(2.0, v));
    double v_des = cruise;
    if (lookahead_curv > 1e-6) v_des = std::min(v_des, std::sqrt(3.2 / lookahead_curv));

    // Follow / conflict terms against propagated agents.
    double a_des = std::clamp(1.2 * (v_des - v), -2.5, 1.8);
    const Scene now = scene_at(script, std::min(t, script.duration));
    for (const auto& agent : now.agents) {
      const auto proj = corridor.project(agent.position);
      const double ds_gap = proj.s - s;
      if (ds_gap <= 0.0 || ds_gap > 70.0) continue;
      const Vec2 agent_dir(std::cos(agent.heading), std::sin(agent.heading));
      const Vec2 road_dir = corridor.tangent_at(proj.s);

      if (std::abs(proj.lateral - offset_at(offset_plan, proj.s)) < 2.2) {
        const bool is_static =
            agent.behavior == AgentBehavior::kConstantVelocity && agent.speed == 0.0;
        if (is_static && offset_plan.active) continue; // handled by the lateral plan
        // Car-following on the agent's along-road speed.
        const double v_lead = agent.speed * agent_dir.dot(road_dir);
        const double gap = ds_gap - 0.5 * (agent.length + ego_len) - 1.0;
        const double a_follow = 0.9 * (gap - (2.0 + 1.4 * v)) + 1.6 * (v_lead - v);
        a_des = std::min(a_des, std::clamp(a_follow, -2.5, 1.8));
      } else {
        // Crossing traffic: brake toward a stop point if the time windows
        // overlap.
        const double lat_rate = agent.speed * agent_dir.dot(Vec2(-road_dir.y(), road_dir.x()));
        const double lat = proj.lateral;
        if (std::abs(lat_rate) > 0.1 && lat * lat_rate < 0.0) {
          const double t_enter = (std::abs(lat) - 2.4) / std::abs(lat_rate);
          const double t_exit = (std::abs(lat) + 2.4) / std::abs(lat_rate);
          const double t_ego = ds_gap / std::max(v, 0.1);
          if (t_ego > t_enter - 1.2 && t_ego < t_exit + 1.2) {
            const double stop_gap = std::max(0.0, ds_gap - 7.0);
            const double v_cap = std::sqrt(2.0 * 2.0 * stop_gap);
            a_des = std::min(a_des, std::clamp(1.5 * (v_cap - v), -2.5, 1.8));
          }
        }
      }
    }

    // Jerk limit, then integrate.
    a += std::clamp(a_des - a, -3.0 * sim_dt, 3.0 * sim_dt);
    v = std::max(0.0, v + a * sim_dt);
    s += v * sim_dt;
  }
  return trace;
}

namespace {

int trace_index(const ExpertTrace& trace, double t) {
  if (trace.time.empty()) throw std::invalid_argument("expert trace is empty");
  const double dt = trace.time.size() > 1 ? trace.time[1] - trace.time[0] : 1.0;
  const int idx = static_cast<int>(std::lround((t - trace.time.front()) / dt));
  return std::clamp(idx, 0, static_cast<int>(trace.time.size()) - 1);
}

}  // namespace

EgoState expert_state_at(const ExpertTrace& trace, double t0, const EgoState& base) {
  const int idx = trace_index(trace, t0);
  EgoState state = base;
  state.position = trace.position[idx];
  state.heading = trace.heading[idx];
  state.speed = trace.speed[idx];
  return state;
}

Trajectory expert_future(const ExpertTrace& trace, double t0, const FactorizationConfig& cfg) {
  const int anchor = trace_index(trace, t0);
  const Vec2 origin = trace.position[anchor];
  const Eigen::Rotation2D<double> rotation(-trace.heading[anchor]);

  Trajectory traj;
  traj.dt = cfg.dt;
  traj.waypoints.resize(2, cfg.horizon_steps);
  for (int k = 1; k <= cfg.horizon_steps; ++k) {
    const int idx = trace_index(trace, t0 + k * cfg.dt);
    traj.waypoints.col(k - 1) = rotation * (trace.position[idx] - origin);
  }
  return traj;
}

std::vector<ScenarioSample> make_recovery_samples(const ScenarioScript& script,
                                                  const std::vector<VisitedState>& states,
                                                  const FactorizationConfig& cfg) {
  std::vector<ScenarioSample> samples;
  samples.reserve(states.size());
  const std::string script_tag = std::to_string(io::fnv1a64(io::script_to_json(script)));
  int idx = 0;
  for (const auto& state : states) {
    ++idx;
    if (state.t + cfg.horizon_steps * cfg.dt > script.duration) continue;
    const double s_proj = script.initial.corridor.project(state.position).s;
    const auto trace = expert_rollout_from(script, state.t, s_proj, state.speed);

    ScenarioSample sample;
    sample.script = script;
    sample.script.initial.ego.position = state.position;
    sample.script.initial.ego.heading = state.heading;
    sample.script.initial.ego.speed = state.speed;
    sample.t0 = state.t;

    const Eigen::Rotation2D<double> rotation(-state.heading);
    sample.expert.dt = cfg.dt;
    sample.expert.waypoints.resize(2, cfg.horizon_steps);
    for (int k = 1; k <= cfg.horizon_steps; ++k) {
      const int tidx = trace_index(trace, state.t + k * cfg.dt);
      sample.expert.waypoints.col(k - 1) = rotation * (trace.position[tidx] - state.position);
    }
    sample.id = script_tag + "-r" + std::to_string(idx);
    samples.push_back(std::move(sample));
  }
  return samples;
}

std::vector<ScenarioSample> make_samples(const ScenarioScript& script,
                                         const std::vector<double>& t0_offsets,
                                         const FactorizationConfig& cfg) {
  const auto trace = expert_rollout(script);
  std::vector<ScenarioSample> samples;
  samples.reserve(t0_offsets.size());
  for (double t0 : t0_offsets) {
    if (t0 + cfg.horizon_steps * cfg.dt > script.duration) continue;
    ScenarioSample sample;
    sample.script = script;
    sample.script.initial.ego = expert_state_at(trace, t0, script.initial.ego);
    sample.t0 = t0;
    sample.expert = expert_future(trace, t0, cfg);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "-%04.1f", t0);
    sample.id = std::to_string(io::fnv1a64(io::script_to_json(sample.script))) + buf;
    samples.push_back(std::move(sample));
  }
  return samples;
}

}  // namespace fplan
