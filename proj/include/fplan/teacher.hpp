#pragma once

#include <vector>

#include "fplan/scene.hpp"
#include "fplan/trajectory.hpp"

namespace fplan {

// Metric sub-scores in [0,1]. nc/dac/ttc/comfort/lk are binary; ep is
// continuous and batch-relative. ddc/tl/ec are fixed 1.0 placeholders: the
// synthetic worlds carry no traffic lights or direction semantics, so their
// slots are retained for aggregation but never computed.
struct SubScores {
  double nc = 1.0;
  double dac = 1.0;
  double ttc = 1.0;
  double comfort = 1.0;
  double ep = 1.0;
  double lk = 1.0;
  double ddc = 1.0;
  double tl = 1.0;
  double ec = 1.0;
};

struct MetricThresholds {
  double ttc_horizon = 1.0;       // s
  double max_abs_accel = 3.0;     // m/s^2
  double max_abs_jerk = 5.0;      // m/s^3
  double max_lat_accel = 4.0;     // m/s^2
  double lk_margin = 0.5;         // m inside the corridor edge
  double collision_check_dt = 0.0; // <= 0 means "use the trajectory dt"
};

struct OrientedBox {
  Vec2 center = Vec2::Zero();
  double heading = 0.0;
  double length = 4.5;
  double width = 2.0;
};

// Separating-axis test over both rectangles' axes.
bool oriented_rect_overlap(const OrientedBox& a, const OrientedBox& b);

// Min over the four axes of (half-extent sum - projected center distance):
// positive means overlap with roughly that depth, negative means separated.
double oriented_rect_penetration(const OrientedBox& a, const OrientedBox& b);

// Per-candidate evaluation detail; ep is filled by teach_batch.
struct CandidateEval {
  SubScores scores;
  double progress = 0.0;           // centerline arclength gained by the candidate
  int comfort_violation_step = -1; // first offending step, -1 if comfortable
};

// Evaluate every metric except ep for a candidate in the ego frame of the
// script at time t0. Throws if the trajectory horizon runs past the script.
CandidateEval evaluate_candidate(const Trajectory& traj, const ScenarioScript& script,
                                 double t0, const MetricThresholds& th);

// Batch scoring with the shared ep reference: the best centerline progress
// among candidates passing nc and dac. If none pass, ep is 0 for all.
std::vector<SubScores> teach_batch(const std::vector<Trajectory>& candidates,
                                   const ScenarioScript& script, double t0,
                                   const MetricThresholds& th);

// Single-candidate scoring; the candidate is its own ep reference.
SubScores score_candidate(const Trajectory& traj, const ScenarioScript& script, double t0,
                          const MetricThresholds& th);

double pdms(const SubScores& s);
double epdms(const SubScores& s);

}  // namespace fplan
