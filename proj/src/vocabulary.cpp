#include "fplan/vocabulary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fplan/random.hpp"

namespace fplan {

double masked_distance(const Eigen::Ref<const VecX>& a, const Eigen::Ref<const VecX>& b,
                       const ArrXb& valid_a, const ArrXb& valid_b) {
  double sum = 0.0;
  int count = 0;
  for (int d = 0; d < a.size(); ++d) {
    if (valid_a[d] && valid_b[d]) {
      const double diff = a[d] - b[d];
      sum += diff * diff;
      ++count;
    }
  }
  return count > 0 ? sum / count : 0.0;
}

namespace {

int valid_dims(const ArrXXb& valid, int col) {
  int n = 0;
  for (int d = 0; d < valid.rows(); ++d)
    if (valid(d, col)) ++n;
  return n;
}

// k-means++ seeding: first center uniform, later centers weighted by the
// current min distance. Deterministic given the seed.
std::vector<int> seed_centers(const MatX& samples, const ArrXXb& valid, int k, Rng& rng) {
  const int n = static_cast<int>(samples.cols());
  std::vector<int> centers;
  centers.reserve(k);
  centers.push_back(rng.uniform_int(0, n - 1));

  VecX min_dist(n);
  for (int i = 0; i < n; ++i)
    min_dist[i] = masked_distance(samples.col(i), samples.col(centers[0]),
                                  valid.col(i), valid.col(centers[0]));

  while (static_cast<int>(centers.size()) < k) {
    const double total = min_dist.sum();
    int pick = -1;
    if (total > 0.0) {
      const double r = rng.uniform(0.0, total);
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += min_dist[i];
        if (acc >= r) { pick = i; break; }
      }
      if (pick < 0) pick = n - 1;
    } else {
      // All mass on existing centers (duplicates); take the lowest unused index.
      std::vector<bool> used(n, false);
      for (int c : centers) used[c] = true;
      for (int i = 0; i < n; ++i)
        if (!used[i]) { pick = i; break; }
      if (pick < 0) pick = rng.uniform_int(0, n - 1);
    }
    centers.push_back(pick);
    for (int i = 0; i < n; ++i)
      min_dist[i] = std::min(min_dist[i], masked_distance(samples.col(i), samples.col(pick),
                                                          valid.col(i), valid.col(pick)));
  }
  return centers;
}

}  // namespace

KMeansResult kmeans(const MatX& samples, const ArrXXb& valid, const KMeansConfig& cfg) {
  const int n = static_cast<int>(samples.cols());
  const int dim = static_cast<int>(samples.rows());
  if (cfg.k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (cfg.k > n) throw std::invalid_argument("kmeans: k exceeds sample count");
  if (valid.rows() != dim || valid.cols() != n)
    throw std::invalid_argument("kmeans: mask shape mismatch");

  Rng rng(cfg.seed);
  const auto seeds = seed_centers(samples, valid, cfg.k, rng);

  KMeansResult res;
  res.centroids.resize(dim, cfg.k);
  res.centroid_valid.resize(dim, cfg.k);
  for (int c = 0; c < cfg.k; ++c) {
    res.centroids.col(c) = samples.col(seeds[c]);
    res.centroid_valid.col(c) = valid.col(seeds[c]);
  }
  res.assignment.assign(n, -1);

  std::vector<int> prev_assignment;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    res.iterations = iter + 1;
    prev_assignment = res.assignment;

    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (int c = 0; c < cfg.k; ++c) {
        const double d = masked_distance(samples.col(i), res.centroids.col(c),
                                         valid.col(i), res.centroid_valid.col(c));
        if (d < best) { best = d; best_c = c; }
      }
      res.assignment[i] = best_c;
    }
    if (res.assignment == prev_assignment && iter > 0) break;

    // Weighted per-dimension means; weight 1/|valid dims| makes the update
    // the exact minimizer of the mean-over-valid-dims cost.
    MatX sums = MatX::Zero(dim, cfg.k);
    MatX weights = MatX::Zero(dim, cfg.k);
    std::vector<int> members(cfg.k, 0);
    ArrXXb new_valid = ArrXXb::Constant(dim, cfg.k, false);
    for (int i = 0; i < n; ++i) {
      const int c = res.assignment[i];
      ++members[c];
      const int nd = valid_dims(valid, i);
      if (nd == 0) continue;
      const double w = 1.0 / nd;
      for (int d = 0; d < dim; ++d) {
        if (valid(d, i)) {
          sums(d, c) += w * samples(d, i);
          weights(d, c) += w;
          new_valid(d, c) = true;
        }
      }
    }
    for (int c = 0; c < cfg.k; ++c) {
      if (members[c] == 0) continue;
      for (int d = 0; d < dim; ++d) {
        if (new_valid(d, c)) res.centroids(d, c) = sums(d, c) / weights(d, c);
      }
      res.centroid_valid.col(c) = new_valid.col(c);
    }

    // Empty-cluster repair: move the centroid onto the farthest sample.
    for (int c = 0; c < cfg.k; ++c) {
      if (members[c] > 0) continue;
      double far_d = -1.0;
      int far_i = 0;
      for (int i = 0; i < n; ++i) {
        const int a = res.assignment[i];
        const double d = masked_distance(samples.col(i), res.centroids.col(a),
                                         valid.col(i), res.centroid_valid.col(a));
        if (d > far_d) { far_d = d; far_i = i; }
      }
      res.centroids.col(c) = samples.col(far_i);
      res.centroid_valid.col(c) = valid.col(far_i);
    }
  }

  double cost = 0.0;
  for (int i = 0; i < n; ++i)
    cost += masked_distance(samples.col(i), res.centroids.col(res.assignment[i]),
                            valid.col(i), res.centroid_valid.col(res.assignment[i]));
  res.cost = n > 0 ? cost / n : 0.0;
  return res;
}

PathVocabulary build_path_vocab(const std::vector<Trajectory>& demos, int num_anchors,
                                const FactorizationConfig& cfg, const KMeansConfig& kcfg) {
  if (demos.empty()) throw std::invalid_argument("build_path_vocab: no demonstrations");
  cfg.validate();
  const int path_len = cfg.path_size();
  const int dim = 2 * path_len;
  const int n = static_cast<int>(demos.size());

  MatX samples(dim, n);
  ArrXXb valid(dim, n);
  for (int i = 0; i < n; ++i) {
    const auto path = resample_path(demos[i].waypoints, cfg);
    for (int k = 0; k < path_len; ++k) {
      samples(2 * k, i) = path.points(0, k);
      samples(2 * k + 1, i) = path.points(1, k);
      valid(2 * k, i) = path.valid[k];
      valid(2 * k + 1, i) = path.valid[k];
    }
  }

  KMeansConfig kc = kcfg;
  kc.k = num_anchors;
  const auto res = kmeans(samples, valid, kc);

  PathVocabulary vocab;
  vocab.cfg = cfg;
  vocab.seed = kcfg.seed;
  vocab.anchors.reserve(num_anchors);
  for (int c = 0; c < num_anchors; ++c) {
    // Unflatten the centroid, then re-resample so anchors honor the ds grid
    // (averaging shortens gaps on mixed-shape clusters).
    int n_valid = 0;
    while (n_valid < path_len && res.centroid_valid(2 * n_valid, c)) ++n_valid;
    Mat2X poly(2, std::max(n_valid, 0));
    for (int k = 0; k < n_valid; ++k)
      poly.col(k) = Vec2(res.centroids(2 * k, c), res.centroids(2 * k + 1, c));
    vocab.anchors.push_back(resample_path(poly, cfg));
  }
  return vocab;
}

VelocityVocabulary build_velocity_vocab(const std::vector<Trajectory>& demos, int num_anchors,
                                        const FactorizationConfig& cfg, const KMeansConfig& kcfg) {
  if (demos.empty()) throw std::invalid_argument("build_velocity_vocab: no demonstrations");
  cfg.validate();
  const int t_steps = cfg.horizon_steps;
  const int n = static_cast<int>(demos.size());

  MatX samples(t_steps, n);
  for (int i = 0; i < n; ++i) {
    const auto vel = extract_velocity(demos[i]);
    if (vel.steps() != t_steps)
      throw std::invalid_argument("build_velocity_vocab: demo horizon mismatch");
    samples.col(i) = vel.speeds;
  }
  const ArrXXb valid = ArrXXb::Constant(t_steps, n, true);

  KMeansConfig kc = kcfg;
  kc.k = num_anchors;
  const auto res = kmeans(samples, valid, kc);

  VelocityVocabulary vocab;
  vocab.cfg = cfg;
  vocab.seed = kcfg.seed;
  vocab.anchors.reserve(num_anchors);
  for (int c = 0; c < num_anchors; ++c) {
    VelocityProfile vp;
    vp.dt = cfg.dt;
    vp.speeds = res.centroids.col(c).cwiseMax(0.0);
    vocab.anchors.push_back(std::move(vp));
  }
  return vocab;
}

Trajectory entry(const TrajectoryVocabulary& vocab, int i, int j) {
  if (i < 0 || i >= vocab.num_paths()) throw std::out_of_range("entry: path index");
  if (j < 0 || j >= vocab.num_velocities()) throw std::out_of_range("entry: velocity index");
  return compose(vocab.paths.anchors[i], vocab.velocities.anchors[j]);
}

CoverageStats coverage_error(const TrajectoryVocabulary& vocab,
                             const std::vector<Trajectory>& heldout) {
  if (heldout.empty()) throw std::invalid_argument("coverage_error: empty held-out set");
  const int num_paths = vocab.num_paths();
  const int num_vels = vocab.num_velocities();

  // Cumulative distances per velocity anchor are shared across all paths.
  std::vector<VecX> cum(num_vels);
  for (int j = 0; j < num_vels; ++j) cum[j] = cumulative_distance(vocab.velocities.anchors[j]);

  std::vector<double> min_ade;
  min_ade.reserve(heldout.size());
  for (const auto& target : heldout) {
    const int t_steps = target.steps();
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < num_paths; ++i) {
      const auto& path = vocab.paths.anchors[i];
      for (int j = 0; j < num_vels; ++j) {
        const VecX& s = cum[j];
        const int n = std::min<int>(t_steps, static_cast<int>(s.size()));
        double acc = 0.0;
        for (int t = 0; t < n; ++t)
          acc += (point_at_distance(path, s[t]).point - target.waypoints.col(t)).norm();
        best = std::min(best, acc / std::max(n, 1));
      }
    }
    min_ade.push_back(best);
  }

  std::vector<double> sorted = min_ade;
  std::sort(sorted.begin(), sorted.end());
  CoverageStats stats;
  stats.targets = static_cast<int>(min_ade.size());
  stats.mean_min_ade = 0.0;
  for (double v : min_ade) stats.mean_min_ade += v;
  stats.mean_min_ade /= stats.targets;
  const int rank = static_cast<int>(std::ceil(0.9 * stats.targets)) - 1;
  stats.p90_min_ade = sorted[std::clamp(rank, 0, stats.targets - 1)];
  return stats;
}

}  // namespace fplan
