#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fplan/types.hpp"

namespace fplan {

struct EgoState {
  Vec2 position = Vec2::Zero();
  double heading = 0.0;
  double speed = 0.0;
  double length = 4.5;
  double width = 2.0;
};

enum class AgentBehavior { kConstantVelocity, kScriptedSpeeds };

struct SpeedPhase {
  double until_t = 0.0; // phase holds for t < until_t; the last phase is open-ended
  double speed = 0.0;
};

struct Agent {
  int id = 0;
  Vec2 position = Vec2::Zero();
  double heading = 0.0;
  double speed = 0.0;
  double length = 4.5;
  double width = 2.0;
  AgentBehavior behavior = AgentBehavior::kConstantVelocity;
  std::vector<SpeedPhase> schedule; // scripted behavior only
};

// Centerline polyline with precomputed cumulative arclength plus a constant
// half-width. Lateral offsets are signed (left of travel positive).
struct DrivableCorridor {
  Mat2X centerline;
  VecX arclength;
  double half_width = 3.5;

  double length() const { return arclength.size() ? arclength[arclength.size() - 1] : 0.0; }

  struct Projection {
    double s = 0.0;
    double lateral = 0.0;
  };
  Projection project(const Vec2& p) const;
  Vec2 point_at(double s) const;
  Vec2 tangent_at(double s) const;
};

DrivableCorridor make_corridor(const Mat2X& centerline, double half_width);

struct Scene {
  EgoState ego;
  std::vector<Agent> agents;
  DrivableCorridor corridor;
  double timestamp = 0.0;
};

enum class ScenarioKind {
  kEmptyRoad,
  kLeadVehicleCruise,
  kLeadVehicleBrake,
  kCrossingAgent,
  kCurvedRoad,
  kBlockedLane,
};

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& name);

// Deterministic expansion of (kind, seed). Ego starts at world origin heading
// +x; completion is measured from ego_start_s over route_length.
struct ScenarioScript {
  ScenarioKind kind = ScenarioKind::kEmptyRoad;
  uint64_t seed = 0;
  double duration = 20.0;
  double route_length = 100.0;
  double ego_start_s = 0.0;
  Scene initial;
};

ScenarioScript generate(ScenarioKind kind, uint64_t seed);

// Agents propagated to time t per their behavior; ego untouched (the
// simulator owns it). Throws if t is outside [0, duration].
Scene scene_at(const ScenarioScript& script, double t);

// Rigid transform into the frame where ego sits at the origin heading +x.
Scene to_ego_frame(const Scene& scene);

}  // namespace fplan
