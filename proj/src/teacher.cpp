#include "fplan/teacher.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fplan {

namespace {

void box_corners(const OrientedBox& box, Vec2 out[4]) {
  const Vec2 fwd(std::cos(box.heading), std::sin(box.heading));
  const Vec2 left(-fwd.y(), fwd.x());
  const Vec2 dl = 0.5 * box.length * fwd;
  const Vec2 dw = 0.5 * box.width * left;
  out[0] = box.center + dl + dw;
  out[1] = box.center + dl - dw;
  out[2] = box.center - dl + dw;
  out[3] = box.center - dl - dw;
}

double axis_margin(const Vec2& axis, const OrientedBox& a, const OrientedBox& b) {
  Vec2 ca[4], cb[4];
  box_corners(a, ca);
  box_corners(b, cb);
  double amin = std::numeric_limits<double>::infinity(), amax = -amin;
  double bmin = amin, bmax = -amin;
  for (int i = 0; i < 4; ++i) {
    const double pa = axis.dot(ca[i]);
    const double pb = axis.dot(cb[i]);
    amin = std::min(amin, pa); amax = std::max(amax, pa);
    bmin = std::min(bmin, pb); bmax = std::max(bmax, pb);
  }
  return std::min(amax, bmax) - std::max(amin, bmin);
}

}  // namespace

double oriented_rect_penetration(const OrientedBox& a, const OrientedBox& b) {
  const Vec2 axes[4] = {
      Vec2(std::cos(a.heading), std::sin(a.heading)),
      Vec2(-std::sin(a.heading), std::cos(a.heading)),
      Vec2(std::cos(b.heading), std::sin(b.heading)),
      Vec2(-std::sin(b.heading), std::cos(b.heading)),
  };
  double depth = std::numeric_limits<double>::infinity();
  for (const auto& axis : axes) depth = std::min(depth, axis_margin(axis, a, b));
  return depth;
}

bool oriented_rect_overlap(const OrientedBox& a, const OrientedBox& b) {
  return oriented_rect_penetration(a, b) >= 0.0;
}

namespace {

struct WorldCandidate {
  std::vector<Vec2> positions; // world frame, index 0 = ego anchor pose
  std::vector<double> headings;
  VecX speeds;
};

WorldCandidate to_world(const Trajectory& traj, const EgoState& ego) {
  const Eigen::Rotation2D<double> rotation(ego.heading);
  WorldCandidate out;
  const int t_steps = traj.steps();
  out.positions.resize(t_steps + 1);
  out.headings.resize(t_steps + 1);
  out.positions[0] = ego.position;
  out.headings[0] = ego.heading;
  Vec2 prev = Vec2::Zero();
  double heading = 0.0;
  for (int t = 0; t < t_steps; ++t) {
    const Vec2 wp = traj.waypoints.col(t);
    const Vec2 delta = wp - prev;
    if (delta.norm() > 1e-9) heading = std::atan2(delta.y(), delta.x());
    out.positions[t + 1] = ego.position + rotation * wp;
    out.headings[t + 1] = ego.heading + heading;
    prev = wp;
  }
  out.speeds = extract_velocity(traj).speeds;
  return out;
}

bool collides_with_any(const OrientedBox& ego_box, const Scene& scene) {
  for (const auto& agent : scene.agents) {
    OrientedBox box{agent.position, agent.heading, agent.length, agent.width};
    if (oriented_rect_overlap(ego_box, box)) return true;
  }
  return false;
}

}  // namespace

CandidateEval evaluate_candidate(const Trajectory& traj, const ScenarioScript& script,
                                 double t0, const MetricThresholds& th) {
  traj.validate();
  const int t_steps = traj.steps();
  const double dt = traj.dt;
  if (t0 < 0.0 || t0 + t_steps * dt > script.duration + 1e-9)
    throw std::runtime_error("evaluate_candidate: trajectory horizon exceeds script duration");

  const EgoState ego = script.initial.ego;
  const auto& corridor = script.initial.corridor;
  const auto world = to_world(traj, ego);

  CandidateEval eval;

  // NC: footprint overlap against propagated agents at the waypoint times.
  for (int k = 1; k <= t_steps && eval.scores.nc > 0.0; ++k) {
    const OrientedBox ego_box{world.positions[k], world.headings[k], ego.length, ego.width};
    if (collides_with_any(ego_box, scene_at(script, t0 + k * dt))) eval.scores.nc = 0.0;
  }

  // TTC: constant-velocity forward projection from each waypoint.
  const double check_dt = th.collision_check_dt > 0.0 ? th.collision_check_dt : dt;
  for (int k = 1; k <= t_steps && eval.scores.ttc > 0.0; ++k) {
    const Vec2 vel =
        (world.positions[k] - world.positions[k - 1]) / dt;
    for (double h = check_dt; h <= th.ttc_horizon + 1e-9; h += check_dt) {
      const OrientedBox ego_box{world.positions[k] + h * vel, world.headings[k], ego.length,
                                ego.width};
      const double t_future = std::min(t0 + k * dt + h, script.duration);
      if (collides_with_any(ego_box, scene_at(script, t_future))) {
        eval.scores.ttc = 0.0;
        break;
      }
    }
  }

  // DAC: every footprint corner inside the corridor. LK: center offset within
  // the margin-tightened band.
  for (int k = 1; k <= t_steps; ++k) {
    const OrientedBox ego_box{world.positions[k], world.headings[k], ego.length, ego.width};
    Vec2 corners[4];
    box_corners(ego_box, corners);
    for (const auto& corner : corners) {
      if (std::abs(corridor.project(corner).lateral) > corridor.half_width) eval.scores.dac = 0.0;
    }
    if (std::abs(corridor.project(world.positions[k]).lateral) >
        corridor.half_width - th.lk_margin)
      eval.scores.lk = 0.0;
  }

  // Comfort: finite-difference accel and jerk on the speed sequence, lateral
  // accel from v^2 * curvature. The ego's current speed precedes the first
  // profile speed: the candidate is executed from the current state, so that
  // transition is a real acceleration.
  {
    const VecX& v = world.speeds;
    std::vector<double> accel(t_steps);
    accel[0] = (v[0] - ego.speed) / dt;
    for (int k = 0; k + 1 < t_steps; ++k) accel[k + 1] = (v[k + 1] - v[k]) / dt;
    for (int k = 0; k < t_steps && eval.scores.comfort > 0.0; ++k) {
      if (std::abs(accel[k]) > th.max_abs_accel) {
        eval.scores.comfort = 0.0;
        eval.comfort_violation_step = k;
      }
    }
    for (int k = 0; k + 1 < t_steps && eval.scores.comfort > 0.0; ++k) {
      if (std::abs((accel[k + 1] - accel[k]) / dt) > th.max_abs_jerk) {
        eval.scores.comfort = 0.0;
        eval.comfort_violation_step = k;
      }
    }
    for (int k = 1; k + 1 <= t_steps && eval.scores.comfort > 0.0; ++k) {
      const double seg =
          0.5 * ((world.positions[k] - world.positions[k - 1]).norm() +
                 (world.positions[k + 1] - world.positions[k]).norm());
      if (seg < 1e-6) continue;
      double dh = world.headings[k + 1] - world.headings[k];
      dh = std::atan2(std::sin(dh), std::cos(dh));
      const double curvature = std::abs(dh) / seg;
      if (v[k - 1] * v[k - 1] * curvature > th.max_lat_accel) {
        eval.scores.comfort = 0.0;
        eval.comfort_violation_step = k;
      }
    }
  }

  // Centerline progress, floored at zero; ep itself is resolved per batch.
  const double s_start = corridor.project(ego.position).s;
  const double s_end = corridor.project(world.positions[t_steps]).s;
  eval.progress = std::max(0.0, s_end - s_start);
  eval.scores.ep = 0.0;
  return eval;
}

std::vector<SubScores> teach_batch(const std::vector<Trajectory>& candidates,
                                   const ScenarioScript& script, double t0,
                                   const MetricThresholds& th) {
  if (candidates.empty()) throw std::invalid_argument("teach_batch: empty candidate list");
  std::vector<CandidateEval> evals;
  evals.reserve(candidates.size());
  for (const auto& c : candidates) evals.push_back(evaluate_candidate(c, script, t0, th));

  double ref = -1.0;
  for (const auto& e : evals)
    if (e.scores.nc > 0.0 && e.scores.dac > 0.0) ref = std::max(ref, e.progress);

  std::vector<SubScores> out;
  out.reserve(evals.size());
  for (auto& e : evals) {
    if (ref < 0.0) e.scores.ep = 0.0;            // nothing passed nc*dac
    else if (ref < 1e-9) e.scores.ep = 1.0;      // best safe progress is zero
    else e.scores.ep = std::clamp(e.progress / ref, 0.0, 1.0);
    out.push_back(e.scores);
  }
  return out;
}

SubScores score_candidate(const Trajectory& traj, const ScenarioScript& script, double t0,
                          const MetricThresholds& th) {
  return teach_batch({traj}, script, t0, th)[0];
}

double pdms(const SubScores& s) {
  return s.nc * s.dac * (5.0 * s.ttc + 2.0 * s.comfort + 5.0 * s.ep) / 12.0;
}

double epdms(const SubScores& s) {
  return s.nc * s.dac * s.ddc * s.tl *
         (5.0 * s.ep + 5.0 * s.ttc + 2.0 * s.lk + 2.0 * s.comfort + 2.0 * s.ec) / 16.0;
}

}  // namespace fplan
