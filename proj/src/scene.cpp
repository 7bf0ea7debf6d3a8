#include "fplan/scene.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "fplan/random.hpp"

namespace fplan {

namespace {

Eigen::Rotation2D<double> rot(double angle) { return Eigen::Rotation2D<double>(angle); }

// Piecewise-constant speed integral over [0, t] plus current speed at t.
std::pair<double, double> scripted_state(const std::vector<SpeedPhase>& schedule, double t) {
  double dist = 0.0;
  double prev_t = 0.0;
  for (size_t i = 0; i < schedule.size(); ++i) {
    const bool last = (i + 1 == schedule.size());
    const double end = last ? std::numeric_limits<double>::infinity() : schedule[i].until_t;
    if (t <= end || last) {
      dist += schedule[i].speed * (t - prev_t);
      return {dist, schedule[i].speed};
    }
    dist += schedule[i].speed * (end - prev_t);
    prev_t = end;
  }
  return {dist, 0.0};
}

}  // namespace

DrivableCorridor::Projection DrivableCorridor::project(const Vec2& p) const {
  const int n = static_cast<int>(centerline.cols());
  double best_d2 = std::numeric_limits<double>::infinity();
  Projection best;
  for (int i = 0; i + 1 < n; ++i) {
    const Vec2 a = centerline.col(i);
    const Vec2 b = centerline.col(i + 1);
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double u = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const Vec2 q = a + u * ab;
    const double d2 = (p - q).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best.s = arclength[i] + u * std::sqrt(len2);
      const Vec2 tangent = ab.normalized();
      const Vec2 off = p - q;
      best.lateral = tangent.x() * off.y() - tangent.y() * off.x();
    }
  }
  return best;
}

Vec2 DrivableCorridor::point_at(double s) const {
  const int n = static_cast<int>(centerline.cols());
  if (s <= 0.0) return centerline.col(0);
  if (s >= length()) return centerline.col(n - 1);
  int i = 0;
  while (i + 2 < n && arclength[i + 1] < s) ++i;
  const double seg = arclength[i + 1] - arclength[i];
  const double u = seg > 0.0 ? (s - arclength[i]) / seg : 0.0;
  return centerline.col(i) + u * (centerline.col(i + 1) - centerline.col(i));
}

Vec2 DrivableCorridor::tangent_at(double s) const {
  const int n = static_cast<int>(centerline.cols());
  int i = 0;
  while (i + 2 < n && arclength[i + 1] < s) ++i;
  return (centerline.col(i + 1) - centerline.col(i)).normalized();
}

DrivableCorridor make_corridor(const Mat2X& centerline, double half_width) {
  if (centerline.cols() < 2) throw std::invalid_argument("make_corridor: centerline needs >= 2 points");
  if (!(half_width > 0.0)) throw std::invalid_argument("make_corridor: half_width must be > 0");
  DrivableCorridor c;
  c.centerline = centerline;
  c.half_width = half_width;
  c.arclength.resize(centerline.cols());
  c.arclength[0] = 0.0;
  for (int i = 1; i < centerline.cols(); ++i) {
    const double step = (centerline.col(i) - centerline.col(i - 1)).norm();
    if (!(step > 0.0)) throw std::invalid_argument("make_corridor: arclength must strictly increase");
    c.arclength[i] = c.arclength[i - 1] + step;
  }
  return c;
}

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kEmptyRoad: return "empty-road";
    case ScenarioKind::kLeadVehicleCruise: return "lead-vehicle-cruise";
    case ScenarioKind::kLeadVehicleBrake: return "lead-vehicle-brake";
    case ScenarioKind::kCrossingAgent: return "crossing-agent";
    case ScenarioKind::kCurvedRoad: return "curved-road";
    case ScenarioKind::kBlockedLane: return "blocked-lane";
  }
  throw std::invalid_argument("to_string: unknown scenario kind");
}

ScenarioKind scenario_kind_from_string(const std::string& name) {
  if (name == "empty-road") return ScenarioKind::kEmptyRoad;
  if (name == "lead-vehicle-cruise") return ScenarioKind::kLeadVehicleCruise;
  if (name == "lead-vehicle-brake") return ScenarioKind::kLeadVehicleBrake;
  if (name == "crossing-agent") return ScenarioKind::kCrossingAgent;
  if (name == "curved-road") return ScenarioKind::kCurvedRoad;
  if (name == "blocked-lane") return ScenarioKind::kBlockedLane;
  throw std::invalid_argument("unknown scenario kind: " + name);
}

ScenarioScript generate(ScenarioKind kind, uint64_t seed) {
  // Parameter ranges per kind; every draw goes through the seeded rng so the
  // script is a pure function of (kind, seed).
  Rng rng(seed ^ (0x9E3779B97F4A7C15ull * (static_cast<uint64_t>(kind) + 1)));

  ScenarioScript script;
  script.kind = kind;
  script.seed = seed;
  script.duration = (kind == ScenarioKind::kLeadVehicleBrake) ? 30.0 : 20.0;

  const bool curved = (kind == ScenarioKind::kCurvedRoad);
  double half_width = rng.uniform(3.2, 4.2);
  if (kind == ScenarioKind::kBlockedLane) half_width = rng.uniform(3.6, 4.4);
  script.route_length = curved ? rng.uniform(60.0, 90.0) : rng.uniform(90.0, 130.0);

  const double back = 20.0, ahead = 60.0;
  const double total = back + script.route_length + ahead;
  script.ego_start_s = back;

  Mat2X centerline;
  if (curved) {
    const double curvature = (rng.uniform01() < 0.5 ? 1.0 : -1.0) * rng.uniform(0.03, 0.12);
    const double radius = 1.0 / curvature;
    const int n = static_cast<int>(total / 2.0) + 1;
    centerline.resize(2, n);
    for (int i = 0; i < n; ++i) {
      const double u = i * total / (n - 1) - back; // ego at u = 0
      centerline.col(i) = Vec2(radius * std::sin(u / radius), radius * (1.0 - std::cos(u / radius)));
    }
  } else {
    const int n = static_cast<int>(total / 5.0) + 1;
    centerline.resize(2, n);
    for (int i = 0; i < n; ++i)
      centerline.col(i) = Vec2(i * total / (n - 1) - back, 0.0);
  }
  script.initial.corridor = make_corridor(centerline, half_width);

  auto& ego = script.initial.ego;
  ego.position = Vec2::Zero();
  ego.heading = 0.0;
  ego.speed = curved ? rng.uniform(3.0, 6.0) : rng.uniform(6.0, 10.0);

  auto along_route = [&](double s_ahead) {
    const double s = script.ego_start_s + s_ahead;
    return std::make_pair(script.initial.corridor.point_at(s),
                          script.initial.corridor.tangent_at(s));
  };

  switch (kind) {
    case ScenarioKind::kEmptyRoad:
    case ScenarioKind::kCurvedRoad:
      break;
    case ScenarioKind::kLeadVehicleCruise: {
      Agent lead;
      lead.id = 1;
      const auto [pos, tangent] = along_route(rng.uniform(15.0, 25.0));
      lead.position = pos;
      lead.heading = std::atan2(tangent.y(), tangent.x());
      lead.speed = rng.uniform(3.0, 6.0);
      script.initial.agents.push_back(lead);
      break;
    }
    case ScenarioKind::kLeadVehicleBrake: {
      Agent lead;
      lead.id = 1;
      const auto [pos, tangent] = along_route(rng.uniform(15.0, 25.0));
      lead.position = pos;
      lead.heading = std::atan2(tangent.y(), tangent.x());
      const double cruise = rng.uniform(5.0, 8.0);
      const double t_brake = rng.uniform(3.0, 5.0);
      const double t_resume = t_brake + rng.uniform(3.0, 5.0);
      lead.speed = cruise;
      lead.behavior = AgentBehavior::kScriptedSpeeds;
      // Finite braking ramp (~5 m/s^2) instead of an instant stop.
      lead.schedule = {{t_brake, cruise},
                       {t_brake + 0.4, 2.0 * cruise / 3.0},
                       {t_brake + 0.8, cruise / 3.0},
                       {t_resume, 0.0},
                       {script.duration, cruise}};
      script.initial.agents.push_back(lead);
      break;
    }
    case ScenarioKind::kCrossingAgent: {
      Agent crosser;
      crosser.id = 1;
      const double side = rng.uniform01() < 0.5 ? 1.0 : -1.0;
      const double offset = rng.uniform(10.0, 14.0);
      const double d_ahead = rng.uniform(20.0, 35.0);
      const auto [pos, tangent] = along_route(d_ahead);
      const Vec2 normal(-tangent.y(), tangent.x());
      crosser.position = pos + side * offset * normal;
      crosser.heading = std::atan2(-side * normal.y(), -side * normal.x());
      crosser.speed = rng.uniform(2.0, 5.0);
      crosser.length = 4.5;
      crosser.width = 2.0;
      script.initial.agents.push_back(crosser);
      break;
    }
    case ScenarioKind::kBlockedLane: {
      Agent blocker;
      blocker.id = 1;
      const auto [pos, tangent] = along_route(rng.uniform(25.0, 40.0));
      const Vec2 normal(-tangent.y(), tangent.x());
      blocker.position = pos + rng.uniform(-0.5, 0.5) * normal;
      blocker.heading = std::atan2(tangent.y(), tangent.x());
      blocker.speed = 0.0;
      script.initial.agents.push_back(blocker);
      break;
    }
  }
  return script;
}

Scene scene_at(const ScenarioScript& script, double t) {
  if (t < -1e-9 || t > script.duration + 1e-9)
    throw std::out_of_range("scene_at: t outside [0, duration]");
  Scene scene = script.initial;
  scene.timestamp = t;
  for (auto& agent : scene.agents) {
    const Vec2 dir(std::cos(agent.heading), std::sin(agent.heading));
    if (agent.behavior == AgentBehavior::kConstantVelocity) {
      agent.position += agent.speed * t * dir;
    } else {
      const auto [dist, speed] = scripted_state(agent.schedule, t);
      agent.position += dist * dir;
      agent.speed = speed;
    }
  }
  return scene;
}

Scene to_ego_frame(const Scene& scene) {
  const auto rotation = rot(-scene.ego.heading);
  const Vec2 origin = scene.ego.position;
  auto xform = [&](const Vec2& p) { return Vec2(rotation * (p - origin)); };

  Scene out = scene;
  out.ego.position = Vec2::Zero();
  out.ego.heading = 0.0;
  for (auto& agent : out.agents) {
    agent.position = xform(agent.position);
    agent.heading -= scene.ego.heading;
  }
  for (int i = 0; i < out.corridor.centerline.cols(); ++i)
    out.corridor.centerline.col(i) = xform(scene.corridor.centerline.col(i));
  return out;
}

}  // namespace fplan
