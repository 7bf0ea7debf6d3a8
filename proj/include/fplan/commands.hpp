#pragma once

#include <string>
#include <vector>

#include "fplan/model.hpp"
#include "fplan/pipeline.hpp"
#include "fplan/simulate.hpp"
#include "fplan/teacher.hpp"
#include "fplan/trainer.hpp"

namespace fplan::cli {

struct ScenarioGenConfig {
  int count = 100;
  std::vector<ScenarioKind> kinds{ScenarioKind::kEmptyRoad,        ScenarioKind::kLeadVehicleCruise,
                                  ScenarioKind::kLeadVehicleBrake, ScenarioKind::kCrossingAgent,
                                  ScenarioKind::kCurvedRoad,       ScenarioKind::kBlockedLane};
  std::vector<double> t0_offsets{0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0};
};

struct ScalingConfig {
  std::vector<std::pair<int, int>> ladder{{16, 8}, {32, 16}, {64, 16}, {128, 32}, {256, 64}};
  int seeds = 3;
  int train_steps = 400;
  int train_batch = 4;
  int eval_count = 60;
};

// Everything a command can need; sections are validated strictly (unknown
// keys are rejected) when parsed from a config file.
struct RunConfig {
  uint64_t seed = 0;
  FactorizationConfig fcfg;
  int n_paths = 64;
  int n_velocities = 16;
  int kmeans_iters = 100;
  ModelConfig mcfg;
  StageConfig stages;
  TrainConfig tcfg;
  RecoveryConfig recovery{0, 2.0, 400, 800, true}; // rounds default off
  AggregationConfig agg;
  MetricThresholds thresholds;
  ScenarioGenConfig scenarios;
  SimConfig sim;
  double success_completion = 0.8;
  ScalingConfig scaling;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path); // empty path keeps defaults

void cmd_gen_scenarios(const RunConfig& cfg, const std::string& out_path);
void cmd_build_vocab(const RunConfig& cfg, const std::string& demos_path,
                     const std::string& out_path);
void cmd_teach_cache(const RunConfig& cfg, const std::string& dataset_path,
                     const std::string& vocab_path, const std::string& out_path);
void cmd_train(const RunConfig& cfg, const std::string& dataset_path,
               const std::string& vocab_path, const std::string& labels_path,
               const std::string& out_prefix);
void cmd_eval(const RunConfig& cfg, const std::string& dataset_path, const std::string& vocab_path,
              const std::string& checkpoint_prefix, const std::string& labels_path,
              const std::string& out_path);
void cmd_simulate(const RunConfig& cfg, const std::string& dataset_path,
                  const std::string& vocab_path, const std::string& checkpoint_prefix,
                  const std::string& out_path, const std::string& trace_dir);
void cmd_scaling_study(const RunConfig& cfg, const std::string& train_dataset_path,
                       const std::string& eval_dataset_path, const std::string& out_csv);

}  // namespace fplan::cli
