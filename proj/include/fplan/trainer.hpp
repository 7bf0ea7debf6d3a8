#pragma once

#include <string>
#include <vector>

#include "fplan/dataset.hpp"
#include "fplan/labels.hpp"
#include "fplan/pipeline.hpp"
#include "fplan/scorer.hpp"

namespace fplan {

struct TrainConfig {
  int steps = 2000;
  int batch_size = 8;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  LossWeights loss;
  StageConfig stages;
};

struct TrainLogRow {
  int step = 0;
  LossBreakdown loss;
};

struct TrainResult {
  ModelParams params;
  std::vector<TrainLogRow> log;
};

// Mini-batch gradient descent with adaptive-moment updates and seeded
// shuffling; deterministic given the seed. Aborts with a diagnostic if the
// total loss stops being finite.
TrainResult train(const std::vector<ScenarioSample>& dataset, const TrajectoryVocabulary& vocab,
                  const ModelParams& initial, TeacherLabelStore& labels, const TrainConfig& cfg);

struct RecoveryConfig {
  int rounds = 1;               // dataset-aggregation rounds after the first fit
  double harvest_stride_s = 2.0; // spacing of harvested replan states
  int max_samples_per_round = 400;
  int round_steps = 0; // steps per recovery fit; 0 uses the base step count
  bool continue_from_previous = true; // refine in place instead of refitting
};

// Dataset-aggregation training: fit, roll the planner closed-loop over the
// t0=0 scenarios, harvest the states it visits, pair them with expert
// continuations, and refit from scratch on the union. Counters the state
// distribution shift between expert demonstrations and the planner's own
// rollouts.
TrainResult train_with_recovery(const std::vector<ScenarioSample>& dataset,
                                const TrajectoryVocabulary& vocab, const ModelParams& initial,
                                TeacherLabelStore& labels, const TrainConfig& cfg,
                                const RecoveryConfig& recovery);

std::string train_log_to_csv(const std::vector<TrainLogRow>& log);

}  // namespace fplan
