#include "fplan/trajectory.hpp"

#include <cmath>
#include <stdexcept>

namespace fplan {

namespace {

bool all_finite(const Mat2X& m) { return m.allFinite(); }

}  // namespace

int FactorizationConfig::path_size() const {
  return static_cast<int>(std::lround(s_max / ds));
}

void FactorizationConfig::validate() const {
  if (!(ds > 0.0)) throw std::invalid_argument("FactorizationConfig: ds must be > 0");
  if (!(dt > 0.0)) throw std::invalid_argument("FactorizationConfig: dt must be > 0");
  if (horizon_steps < 1) throw std::invalid_argument("FactorizationConfig: horizon_steps must be >= 1");
  const double s = s_max / ds;
  if (s < 1.0 - 1e-9 || std::abs(s - std::lround(s)) > 1e-9)
    throw std::invalid_argument("FactorizationConfig: s_max must be an integer multiple of ds, >= ds");
}

void Trajectory::validate() const {
  if (waypoints.cols() < 1) throw std::invalid_argument("Trajectory: needs at least one waypoint");
  if (!(dt > 0.0)) throw std::invalid_argument("Trajectory: dt must be > 0");
  if (!all_finite(waypoints)) throw std::invalid_argument("Trajectory: non-finite waypoint");
}

int GeometricPath::valid_count() const {
  int n = 0;
  while (n < valid.size() && valid[n]) ++n;
  return n;
}

void GeometricPath::validate() const {
  if (points.cols() < 1) throw std::invalid_argument("GeometricPath: needs at least one point");
  if (valid.size() != points.cols()) throw std::invalid_argument("GeometricPath: mask size mismatch");
  if (!(ds > 0.0)) throw std::invalid_argument("GeometricPath: ds must be > 0");
  if (!all_finite(points)) throw std::invalid_argument("GeometricPath: non-finite point");
  bool seen_invalid = false;
  for (int i = 0; i < valid.size(); ++i) {
    if (!valid[i]) seen_invalid = true;
    else if (seen_invalid) throw std::invalid_argument("GeometricPath: valid points must form a prefix");
  }
}

void VelocityProfile::validate() const {
  if (speeds.size() < 1) throw std::invalid_argument("VelocityProfile: needs at least one speed");
  if (!(dt > 0.0)) throw std::invalid_argument("VelocityProfile: dt must be > 0");
  for (int i = 0; i < speeds.size(); ++i) {
    if (!std::isfinite(speeds[i]) || speeds[i] < 0.0)
      throw std::invalid_argument("VelocityProfile: speeds must be finite and nonnegative");
  }
}

VelocityProfile extract_velocity(const Trajectory& traj) {
  traj.validate();
  const int t_steps = traj.steps();
  VelocityProfile out;
  out.dt = traj.dt;
  out.speeds.resize(t_steps);
  Vec2 prev = Vec2::Zero();
  for (int t = 0; t < t_steps; ++t) {
    const Vec2 cur = traj.waypoints.col(t);
    out.speeds[t] = (cur - prev).norm() / traj.dt;
    prev = cur;
  }
  return out;
}

GeometricPath resample_path(const Mat2X& waypoints, const FactorizationConfig& cfg) {
  cfg.validate();
  if (!all_finite(waypoints)) throw std::invalid_argument("resample_path: non-finite input point");

  const int path_len = cfg.path_size();
  GeometricPath out;
  out.ds = cfg.ds;
  out.points.resize(2, path_len);
  out.valid.resize(path_len);

  // Polyline anchored at the origin; zero-length segments are skipped.
  const int n_in = static_cast<int>(waypoints.cols());
  Mat2X poly(2, n_in + 1);
  poly.col(0).setZero();
  poly.rightCols(n_in) = waypoints;

  VecX cum(n_in + 1);
  cum[0] = 0.0;
  for (int i = 1; i <= n_in; ++i)
    cum[i] = cum[i - 1] + (poly.col(i) - poly.col(i - 1)).norm();
  const double total = cum[n_in];
  const double eps = 1e-9 * cfg.ds;

  int seg = 0;
  for (int k = 0; k < path_len; ++k) {
    const double target = (k + 1) * cfg.ds;
    if (target <= total + eps) {
      const double s = std::min(target, total);
      while (seg + 1 < n_in && cum[seg + 1] < s) ++seg;
      const double seg_len = cum[seg + 1] - cum[seg];
      if (seg_len > 0.0) {
        const double a = (s - cum[seg]) / seg_len;
        out.points.col(k) = poly.col(seg) + a * (poly.col(seg + 1) - poly.col(seg));
      } else {
        out.points.col(k) = poly.col(seg);
      }
      out.valid[k] = true;
    } else {
      out.points.col(k) = poly.col(n_in);
      out.valid[k] = false;
    }
  }
  return out;
}

std::pair<GeometricPath, VelocityProfile> factorize(const Trajectory& traj,
                                                    const FactorizationConfig& cfg) {
  traj.validate();
  return {resample_path(traj.waypoints, cfg), extract_velocity(traj)};
}

VecX cumulative_distance(const VelocityProfile& vel) {
  vel.validate();
  VecX out(vel.speeds.size());
  double acc = 0.0;
  for (int t = 0; t < vel.speeds.size(); ++t) {
    acc += vel.speeds[t] * vel.dt;
    out[t] = acc;
  }
  return out;
}

PathSample point_at_distance(const GeometricPath& path, double s) {
  if (s < 0.0) throw std::invalid_argument("point_at_distance: s must be >= 0");
  const int n_valid = path.valid_count();
  const double ds = path.ds;
  const double valid_extent = n_valid * ds;

  if (s >= valid_extent) {
    const Vec2 last = (n_valid == 0) ? Vec2::Zero() : Vec2(path.points.col(n_valid - 1));
    // The first masked slot stores the true polyline end, so a path that
    // stops between grid points still interpolates out to its real extent.
    if (n_valid < path.size()) {
      const Vec2 frag_end = path.points.col(n_valid);
      const double frag_len = (frag_end - last).norm();
      if (s >= valid_extent + frag_len) return {frag_end, s > valid_extent + frag_len};
      return {last + ((s - valid_extent) / frag_len) * (frag_end - last), false};
    }
    return {last, s > valid_extent};
  }
  const int a = static_cast<int>(s / ds); // bracket [a*ds, (a+1)*ds)
  const double r = s - a * ds;
  const Vec2 lo = (a == 0) ? Vec2::Zero() : Vec2(path.points.col(a - 1));
  const Vec2 hi = path.points.col(a);
  return {lo + (r / ds) * (hi - lo), false};
}

Trajectory compose(const GeometricPath& path, const VelocityProfile& vel) {
  const VecX dist = cumulative_distance(vel);
  Trajectory out;
  out.dt = vel.dt;
  out.waypoints.resize(2, dist.size());
  for (int t = 0; t < dist.size(); ++t)
    out.waypoints.col(t) = point_at_distance(path, dist[t]).point;
  return out;
}

}  // namespace fplan
