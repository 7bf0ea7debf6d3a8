#pragma once

#include <vector>

#include "fplan/dataset.hpp"
#include "fplan/scene.hpp"
#include "fplan/trajectory.hpp"

namespace fplan {

// Scripted corridor-following expert: tracks the centerline with a smooth
// lateral offset around static blockers, regulates speed for curvature,
// leads, and crossing traffic, and keeps accel/jerk inside the comfort
// thresholds. Deterministic.
struct ExpertTrace {
  std::vector<double> time;     // fine integration grid
  std::vector<Vec2> position;   // world frame
  std::vector<double> heading;
  std::vector<double> speed;
};

ExpertTrace expert_rollout(const ScenarioScript& script, double sim_dt = 0.05);

// Roll the expert from an arbitrary along-corridor state at absolute time
// t_start; used to supervise recovery from states the planner visited.
ExpertTrace expert_rollout_from(const ScenarioScript& script, double t_start, double s_start,
                                double v_start, double sim_dt = 0.05);

// Ego-frame future trajectory read off the trace at t0.
Trajectory expert_future(const ExpertTrace& trace, double t0, const FactorizationConfig& cfg);

EgoState expert_state_at(const ExpertTrace& trace, double t0, const EgoState& base);

// Dataset rows for a scenario: the script with its ego moved to the expert's
// rolled state at each t0, plus the expert's future from there.
std::vector<ScenarioSample> make_samples(const ScenarioScript& script,
                                         const std::vector<double>& t0_offsets,
                                         const FactorizationConfig& cfg);

struct VisitedState {
  double t = 0.0;
  Vec2 position = Vec2::Zero();
  double heading = 0.0;
  double speed = 0.0;
};

// Recovery rows: planner-visited states paired with the expert's own
// continuation from the projected corridor state, expressed in the visited
// pose's frame.
std::vector<ScenarioSample> make_recovery_samples(const ScenarioScript& script,
                                                  const std::vector<VisitedState>& states,
                                                  const FactorizationConfig& cfg);

}  // namespace fplan
