#pragma once

// Shared helpers for the test suites. Random draws go through TestRng so the
// generated cases are identical across platforms and runs.

#include <cmath>
#include <cstdint>
#include <random>

#include "fplan/trajectory.hpp"

namespace fplan::test {

class TestRng {
 public:
  explicit TestRng(uint64_t seed) : eng_(seed) {}

  double uniform(double lo, double hi) {
    const uint64_t r = eng_();
    const double u = static_cast<double>(r >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
  }

  int uniform_int(int lo, int hi) { // inclusive
    return lo + static_cast<int>(uniform(0.0, 1.0) * (hi - lo + 1 - 1e-12));
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    // Box-Muller; avoids implementation-defined std::normal_distribution.
    const double u1 = std::max(uniform(0.0, 1.0), 1e-300);
    const double u2 = uniform(0.0, 1.0);
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 eng_;
};

// Smooth forward-moving trajectory with bounded accel and curvature. Total
// polyline length stays below cfg.s_max so compose/factorize roundtrips are
// clamp-free.
inline Trajectory make_smooth_trajectory(TestRng& rng, const FactorizationConfig& cfg) {
  const int t_steps = cfg.horizon_steps;
  const double max_speed = 0.9 * cfg.s_max / (t_steps * cfg.dt);
  const double max_curvature = 0.4; // 2.5 m turn radius
  double speed = rng.uniform(0.3, max_speed);
  double heading = rng.uniform(-0.5, 0.5);

  Trajectory traj;
  traj.dt = cfg.dt;
  traj.waypoints.resize(2, t_steps);
  Vec2 pos = Vec2::Zero();
  for (int t = 0; t < t_steps; ++t) {
    speed = std::clamp(speed + rng.uniform(-1.0, 1.0) * cfg.dt, 0.2, max_speed);
    const double step_len = speed * cfg.dt;
    heading += rng.uniform(-1.0, 1.0) * max_curvature * step_len;
    pos += step_len * Vec2(std::cos(heading), std::sin(heading));
    traj.waypoints.col(t) = pos;
  }
  return traj;
}

inline Trajectory straight_constant_trajectory(double speed, double heading, int t_steps, double dt) {
  Trajectory traj;
  traj.dt = dt;
  traj.waypoints.resize(2, t_steps);
  for (int t = 0; t < t_steps; ++t)
    traj.waypoints.col(t) = (t + 1) * speed * dt * Vec2(std::cos(heading), std::sin(heading));
  return traj;
}

// Constant-curvature arc with a linear speed ramp, origin start, heading +x.
inline Trajectory make_arc_demo(double curvature, double v0, double v1,
                                const FactorizationConfig& cfg) {
  Trajectory traj;
  traj.dt = cfg.dt;
  traj.waypoints.resize(2, cfg.horizon_steps);
  double heading = 0.0;
  Vec2 pos = Vec2::Zero();
  for (int t = 0; t < cfg.horizon_steps; ++t) {
    const double v = v0 + (v1 - v0) * t / std::max(cfg.horizon_steps - 1, 1);
    const double step = v * cfg.dt;
    heading += curvature * step;
    pos += step * Vec2(std::cos(heading), std::sin(heading));
    traj.waypoints.col(t) = pos;
  }
  return traj;
}

// Five behavior families: straight, left arc, right arc, accelerate, brake.
inline std::vector<Trajectory> mixed_demo_set(uint64_t seed, int count,
                                              const FactorizationConfig& cfg) {
  TestRng rng(seed);
  std::vector<Trajectory> demos;
  demos.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int family = i % 5;
    const double v0 = rng.uniform(2.0, 6.0);
    switch (family) {
      case 0: demos.push_back(make_arc_demo(rng.uniform(-0.01, 0.01), v0, v0, cfg)); break;
      case 1: demos.push_back(make_arc_demo(rng.uniform(0.05, 0.2), v0, v0, cfg)); break;
      case 2: demos.push_back(make_arc_demo(rng.uniform(-0.2, -0.05), v0, v0, cfg)); break;
      case 3:
        demos.push_back(make_arc_demo(rng.uniform(-0.02, 0.02), v0, std::min(v0 + 3.0, 7.0), cfg));
        break;
      default:
        demos.push_back(make_arc_demo(rng.uniform(-0.02, 0.02), v0, std::max(v0 - 3.0, 0.5), cfg));
        break;
    }
  }
  return demos;
}

// Central finite difference of f at x[idx].
template <typename F>
double fd_gradient(F&& f, VecX& x, long idx, double h = 1e-5) {
  const double orig = x[idx];
  x[idx] = orig + h;
  const double up = f(x);
  x[idx] = orig - h;
  const double down = f(x);
  x[idx] = orig;
  return (up - down) / (2.0 * h);
}

// Central differences at h=1e-5 on an O(1) loss resolve gradients down to
// roughly 1e-8; below that, truncation noise dominates, so near-zero entries
// pass on a small absolute floor instead of the relative bound.
inline bool grad_close(double analytic, double fd) {
  const double diff = std::abs(analytic - fd);
  return diff <= 1e-4 * std::max(std::abs(analytic), std::abs(fd)) || diff <= 5e-9;
}

}  // namespace fplan::test
