#pragma once

#include <array>
#include <map>
#include <string>

#include "fplan/dataset.hpp"
#include "fplan/model.hpp"
#include "fplan/teacher.hpp"
#include "fplan/vocabulary.hpp"

namespace fplan {

// Teacher labels for every vocabulary entry of a sample, with the ep
// reference fixed once over the full grid so cached values do not depend on
// which candidate batch later requests them. Labels are computed on first
// touch and kept in a compact per-sample table.
class TeacherLabelStore {
 public:
  TeacherLabelStore(const TrajectoryVocabulary* vocab, MetricThresholds thresholds)
      : vocab_(vocab), thresholds_(thresholds) {}

  // Metric-head-ordered labels {nc, dac, ttc, comfort, ep, lk} for entry (i,j).
  std::array<double, kNumMetricHeads> labels(const ScenarioSample& sample, int i, int j);

  SubScores subscores(const ScenarioSample& sample, int i, int j);

  // Score a non-vocabulary trajectory against the sample's grid-wide ep
  // reference (used for external baselines).
  SubScores score_external(const ScenarioSample& sample, const Trajectory& traj);

  void ensure(const ScenarioSample& sample);

  // Byte-stable JSONL snapshot of every computed sample, sorted by (id, i, j).
  std::string to_jsonl() const;
  void load_jsonl(const std::string& text, const std::vector<ScenarioSample>& samples);

  long computed_entries() const;

 private:
  struct CompactLabel {
    uint8_t flags = 0; // nc | dac<<1 | ttc<<2 | comfort<<3 | lk<<4
    float ep = 0.0f;
  };
  struct SampleTable {
    std::vector<CompactLabel> grid; // N_p * N_v, lexicographic (i, j)
    double ep_ref = -1.0;           // best safe progress; -1 when nothing passes
  };

  const SampleTable& table(const ScenarioSample& sample);

  const TrajectoryVocabulary* vocab_;
  MetricThresholds thresholds_;
  std::map<std::string, SampleTable> tables_;
};

}  // namespace fplan
