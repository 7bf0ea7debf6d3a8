#pragma once

#include <string>
#include <vector>

#include "fplan/scene.hpp"
#include "fplan/trajectory.hpp"

namespace fplan {

// One dataset row: a scenario, the evaluation anchor time, and the scripted
// expert's future trajectory in the ego frame at t0.
struct ScenarioSample {
  std::string id;
  ScenarioScript script;
  double t0 = 0.0;
  Trajectory expert;
};

}  // namespace fplan
