#pragma once

#include <utility>

#include "fplan/types.hpp"

namespace fplan {

// Shared discretization for factorization and composition. The spatial
// horizon must be an integer multiple of ds.
struct FactorizationConfig {
  double ds = 1.0;     // spatial interval [m]
  double s_max = 30.0; // spatial horizon [m]
  double dt = 0.5;     // temporal interval [s]
  int horizon_steps = 8;

  int path_size() const;
  void validate() const;
};

// Time-indexed ego waypoints at fixed dt, expressed in the ego frame of the
// first timestamp. The implicit origin (0,0) precedes column 0.
struct Trajectory {
  Mat2X waypoints; // 2 x T
  double dt = 0.5;

  int steps() const { return static_cast<int>(waypoints.cols()); }
  void validate() const;
};

// Arc-length resampled shape at fixed ds. Valid points form a prefix;
// masked tail entries hold the last reachable position so downstream
// geometry never sees sentinels.
struct GeometricPath {
  Mat2X points; // 2 x S, point k sits at nominal arc distance (k+1)*ds
  ArrXb valid;  // S
  double ds = 1.0;

  int size() const { return static_cast<int>(points.cols()); }
  int valid_count() const;
  void validate() const;
};

// Per-interval average speeds over the planning horizon.
struct VelocityProfile {
  VecX speeds; // T, nonnegative
  double dt = 0.5;

  int steps() const { return static_cast<int>(speeds.size()); }
  void validate() const;
};

struct PathSample {
  Vec2 point;
  bool clamped = false;
};

// Average speed between consecutive waypoints, origin prepended.
VelocityProfile extract_velocity(const Trajectory& traj);

// Resample a polyline (implicitly anchored at the origin) at arc distances
// ds, 2*ds, ..., s_max. Points beyond the polyline length are masked invalid
// and pinned to the polyline end.
GeometricPath resample_path(const Mat2X& waypoints, const FactorizationConfig& cfg);

// Split a trajectory into its spatial and temporal factors.
std::pair<GeometricPath, VelocityProfile> factorize(const Trajectory& traj,
                                                    const FactorizationConfig& cfg);

// Prefix sums of v_t * dt.
VecX cumulative_distance(const VelocityProfile& vel);

// Linear interpolation between bracketing valid path points, with the origin
// at distance 0. Distances past the valid extent clamp to the last valid
// point and set the flag.
PathSample point_at_distance(const GeometricPath& path, double s);

// Rebuild a trajectory by walking the path at the cumulative distances
// implied by the velocity profile.
Trajectory compose(const GeometricPath& path, const VelocityProfile& vel);

}  // namespace fplan
