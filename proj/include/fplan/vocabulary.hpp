#pragma once

#include <cstdint>
#include <vector>

#include "fplan/trajectory.hpp"
#include "fplan/types.hpp"

namespace fplan {

struct KMeansConfig {
  int k = 1;
  int max_iters = 100;
  uint64_t seed = 0;
};

struct KMeansResult {
  MatX centroids;        // D x k
  ArrXXb centroid_valid; // D x k, union of member validity
  std::vector<int> assignment;
  double cost = 0.0; // mean masked squared distance to assigned centroid
  int iterations = 0;
};

// Masked squared distance: mean over jointly valid dimensions of the squared
// difference; zero jointly valid dimensions count as distance 0.
double masked_distance(const Eigen::Ref<const VecX>& a, const Eigen::Ref<const VecX>& b,
                       const ArrXb& valid_a, const ArrXb& valid_b);

// Lloyd iterations with k-means++-style seeding, deterministic under seed.
// Empty clusters are reseeded to the sample farthest from its assigned
// centroid (ties broken by lowest index).
KMeansResult kmeans(const MatX& samples, const ArrXXb& valid, const KMeansConfig& cfg);

struct PathVocabulary {
  std::vector<GeometricPath> anchors;
  FactorizationConfig cfg;
  uint64_t seed = 0;

  int size() const { return static_cast<int>(anchors.size()); }
};

struct VelocityVocabulary {
  std::vector<VelocityProfile> anchors;
  FactorizationConfig cfg;
  uint64_t seed = 0;

  int size() const { return static_cast<int>(anchors.size()); }
};

// Compact factor vocabularies; the N_p x N_v trajectory set is composed
// lazily and never materialized.
struct TrajectoryVocabulary {
  PathVocabulary paths;
  VelocityVocabulary velocities;

  int num_paths() const { return paths.size(); }
  int num_velocities() const { return velocities.size(); }
  long num_entries() const { return static_cast<long>(paths.size()) * velocities.size(); }
};

PathVocabulary build_path_vocab(const std::vector<Trajectory>& demos, int num_anchors,
                                const FactorizationConfig& cfg, const KMeansConfig& kcfg);

VelocityVocabulary build_velocity_vocab(const std::vector<Trajectory>& demos, int num_anchors,
                                        const FactorizationConfig& cfg, const KMeansConfig& kcfg);

// Compose anchor pair (i, j); pure and recomputable.
Trajectory entry(const TrajectoryVocabulary& vocab, int i, int j);

struct CoverageStats {
  double mean_min_ade = 0.0;
  double p90_min_ade = 0.0;
  int targets = 0;
};

// Exhaustive min average-displacement of each held-out trajectory against the
// composed vocabulary; entries are composed on the fly.
CoverageStats coverage_error(const TrajectoryVocabulary& vocab,
                             const std::vector<Trajectory>& heldout);

}  // namespace fplan
