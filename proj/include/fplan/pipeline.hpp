#pragma once

#include <array>
#include <utility>
#include <vector>

#include "fplan/dataset.hpp"
#include "fplan/labels.hpp"
#include "fplan/scorer.hpp"

namespace fplan {

// Indices of the k largest scores, descending by score with ties broken by
// lower index.
std::vector<int> top_k(const Eigen::Ref<const VecX>& scores, int k);

// Ordered (K_p, K_v) pruning stages. K values that exceed the surviving
// anchor count are clamped at plan time.
struct StageConfig {
  std::vector<std::pair<int, int>> stages{{128, 64}, {20, 20}};
  void validate() const;
};

struct AggregationConfig {
  // Exponent on the softmax imitation weight; 0 keeps pure metric
  // aggregation with benchmark weights.
  double imitation_beta = 0.0;
};

struct FineCandidateScore {
  int i = 0, j = 0;
  double final_score = 0.0;
  double imitation_logit = 0.0;
  std::array<double, kNumMetricHeads> metric_probs{};
};

struct PlanResult {
  Trajectory best;
  int best_i = -1, best_j = -1;
  double best_score = 0.0;
  std::vector<FineCandidateScore> fine; // sorted by (i, j)
  std::vector<std::vector<int>> stage_path_survivors; // per stage, score-ordered
  std::vector<std::vector<int>> stage_vel_survivors;
  std::vector<VecX> stage_path_scores;
  std::vector<VecX> stage_vel_scores;
  long fine_candidates_scored = 0;
};

struct PruneResult {
  std::vector<int> paths, vels; // final survivors, ascending
  std::vector<std::vector<int>> stage_paths, stage_vels;
  std::vector<VecX> stage_path_scores, stage_vel_scores;
};

PruneResult prune_stages(const VecX& path_scores, const VecX& vel_scores,
                         const StageConfig& stages);

// Staged coarse-to-fine planning; ties resolved toward the lowest (i, j).
PlanResult plan(const Scene& ego_scene, const TrajectoryVocabulary& vocab,
                const ModelParams& params, const StageConfig& stages,
                const AggregationConfig& agg = {});

// Independent exhaustive oracle over every (i, j); enforces a 65536-entry cap.
PlanResult plan_exhaustive(const Scene& ego_scene, const TrajectoryVocabulary& vocab,
                           const ModelParams& params, const AggregationConfig& agg = {});

struct RecallStats {
  int hits = 0;
  int scenes = 0;
  double recall = 0.0;
};

// Fraction of samples whose expert-nearest anchor pair survives every
// pruning stage.
RecallStats coarse_recall(const std::vector<ScenarioSample>& samples,
                          const TrajectoryVocabulary& vocab, const ModelParams& params,
                          const StageConfig& stages);

// Expert-nearest (i, j) by squared-L2 trajectory distance over the full grid.
CandidateIdx nearest_entry(const TrajectoryVocabulary& vocab, const Trajectory& expert);

struct EvalReport {
  double mean_pdms = 0.0;  // [0, 100]
  double mean_epdms = 0.0; // [0, 100]
  RecallStats recall;
  int scenes = 0;
};

// Open-loop evaluation: plan each sample, score the selection with the rule
// teacher (grid-wide ep reference), aggregate PDMS/EPDMS on the 0-100 scale.
EvalReport evaluate_planner(const std::vector<ScenarioSample>& samples,
                            const TrajectoryVocabulary& vocab, const ModelParams& params,
                            const StageConfig& stages, TeacherLabelStore& labels,
                            const AggregationConfig& agg = {});

}  // namespace fplan
