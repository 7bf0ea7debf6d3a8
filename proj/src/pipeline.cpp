#include "fplan/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "fplan/teacher.hpp"

namespace fplan {

std::vector<int> top_k(const Eigen::Ref<const VecX>& scores, int k) {
  const int n = static_cast<int>(scores.size());
  if (k < 1 || k > n) throw std::invalid_argument("top_k: k out of range");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  idx.resize(k);
  return idx;
}

void StageConfig::validate() const {
  if (stages.empty()) throw std::invalid_argument("StageConfig: needs at least one stage");
  for (size_t s = 0; s < stages.size(); ++s) {
    if (stages[s].first < 1 || stages[s].second < 1)
      throw std::invalid_argument("StageConfig: K values must be >= 1");
    if (s > 0 && (stages[s].first > stages[s - 1].first || stages[s].second > stages[s - 1].second))
      throw std::invalid_argument("StageConfig: K values must be non-increasing across stages");
  }
}

PruneResult prune_stages(const VecX& path_scores, const VecX& vel_scores,
                         const StageConfig& stages) {
  stages.validate();
  PruneResult out;
  std::vector<int> paths(path_scores.size());
  std::vector<int> vels(vel_scores.size());
  std::iota(paths.begin(), paths.end(), 0);
  std::iota(vels.begin(), vels.end(), 0);

  for (const auto& [want_p, want_v] : stages.stages) {
    auto narrow = [](const VecX& scores, std::vector<int>& survivors, int want,
                     std::vector<int>& snapshot_idx, VecX& snapshot_scores) {
      const int keep = std::min<int>(want, static_cast<int>(survivors.size()));
      VecX restricted(survivors.size());
      for (size_t r = 0; r < survivors.size(); ++r) restricted[r] = scores[survivors[r]];
      const auto local = top_k(restricted, keep);
      snapshot_idx.resize(keep);
      snapshot_scores.resize(keep);
      std::vector<int> next(keep);
      for (int r = 0; r < keep; ++r) {
        next[r] = survivors[local[r]];
        snapshot_idx[r] = survivors[local[r]];
        snapshot_scores[r] = restricted[local[r]];
      }
      survivors = std::move(next);
    };
    std::vector<int> snap_p, snap_v;
    VecX snap_ps, snap_vs;
    narrow(path_scores, paths, want_p, snap_p, snap_ps);
    narrow(vel_scores, vels, want_v, snap_v, snap_vs);
    out.stage_paths.push_back(std::move(snap_p));
    out.stage_vels.push_back(std::move(snap_v));
    out.stage_path_scores.push_back(std::move(snap_ps));
    out.stage_vel_scores.push_back(std::move(snap_vs));
  }
  std::sort(paths.begin(), paths.end());
  std::sort(vels.begin(), vels.end());
  out.paths = std::move(paths);
  out.vels = std::move(vels);
  return out;
}

namespace {

double predicted_pdm(const std::array<double, kNumMetricHeads>& probs) {
  return probs[kMetricNc] * probs[kMetricDac] *
         (5.0 * probs[kMetricTtc] + 2.0 * probs[kMetricComfort] + 5.0 * probs[kMetricEp]) / 12.0;
}

// Shared fine-stage scoring: per-candidate metric probabilities, optional
// imitation weighting, lexicographic tie-breaking.
void aggregate_candidates(const FineForward& fine, const AggregationConfig& agg,
                          PlanResult& result) {
  const int k_cands = static_cast<int>(fine.cands.size());
  VecX imitation_weight;
  if (agg.imitation_beta != 0.0) {
    imitation_weight = soft_targets(-fine.traj_logits, 1.0); // softmax of the logits
  }
  result.fine.resize(k_cands);
  result.best_i = -1;
  double best = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < k_cands; ++c) {
    FineCandidateScore& fc = result.fine[c];
    fc.i = fine.cands[c].i;
    fc.j = fine.cands[c].j;
    fc.imitation_logit = fine.traj_logits[c];
    for (int m = 0; m < kNumMetricHeads; ++m) fc.metric_probs[m] = sigmoid(fine.metric_logits(m, c));
    fc.final_score = predicted_pdm(fc.metric_probs);
    if (agg.imitation_beta != 0.0)
      fc.final_score *= std::pow(imitation_weight[c], agg.imitation_beta);
    if (fc.final_score > best) { // strict: first (lowest lex) max wins
      best = fc.final_score;
      result.best_i = fc.i;
      result.best_j = fc.j;
      result.best = fine.composed[c];
    }
  }
  result.best_score = best;
  result.fine_candidates_scored = k_cands;
}

}  // namespace

PlanResult plan(const Scene& ego_scene, const TrajectoryVocabulary& vocab,
                const ModelParams& params, const StageConfig& stages,
                const AggregationConfig& agg) {
  const auto coarse = coarse_forward(params, ego_scene, vocab);
  const auto pruned = prune_stages(coarse.path_scores, coarse.vel_scores, stages);

  std::vector<CandidateIdx> cands;
  cands.reserve(pruned.paths.size() * pruned.vels.size());
  for (int i : pruned.paths)
    for (int j : pruned.vels) cands.push_back({i, j});

  const auto fine = fine_forward(params, coarse, vocab, cands);

  PlanResult result;
  result.stage_path_survivors = pruned.stage_paths;
  result.stage_vel_survivors = pruned.stage_vels;
  result.stage_path_scores = pruned.stage_path_scores;
  result.stage_vel_scores = pruned.stage_vel_scores;
  aggregate_candidates(fine, agg, result);
  return result;
}

PlanResult plan_exhaustive(const Scene& ego_scene, const TrajectoryVocabulary& vocab,
                           const ModelParams& params, const AggregationConfig& agg) {
  if (vocab.num_entries() > 65536)
    throw std::invalid_argument("plan_exhaustive: vocabulary too large to enumerate");
  const auto coarse = coarse_forward(params, ego_scene, vocab);
  std::vector<CandidateIdx> cands;
  cands.reserve(vocab.num_entries());
  for (int i = 0; i < vocab.num_paths(); ++i)
    for (int j = 0; j < vocab.num_velocities(); ++j) cands.push_back({i, j});
  const auto fine = fine_forward(params, coarse, vocab, cands);

  PlanResult result;
  aggregate_candidates(fine, agg, result);
  return result;
}

CandidateIdx nearest_entry(const TrajectoryVocabulary& vocab, const Trajectory& expert) {
  CandidateIdx best{0, 0};
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < vocab.num_paths(); ++i) {
    for (int j = 0; j < vocab.num_velocities(); ++j) {
      const Trajectory traj = entry(vocab, i, j);
      const double d = (traj.waypoints - expert.waypoints).colwise().squaredNorm().sum();
      if (d < best_d) {
        best_d = d;
        best = {i, j};
      }
    }
  }
  return best;
}

RecallStats coarse_recall(const std::vector<ScenarioSample>& samples,
                          const TrajectoryVocabulary& vocab, const ModelParams& params,
                          const StageConfig& stages) {
  RecallStats stats;
  for (const auto& sample : samples) {
    const auto target = nearest_entry(vocab, sample.expert);
    const Scene scene = to_ego_frame(scene_at(sample.script, sample.t0));
    const auto coarse = coarse_forward(params, scene, vocab);
    const auto pruned = prune_stages(coarse.path_scores, coarse.vel_scores, stages);
    const bool hit = std::binary_search(pruned.paths.begin(), pruned.paths.end(), target.i) &&
                     std::binary_search(pruned.vels.begin(), pruned.vels.end(), target.j);
    stats.hits += hit ? 1 : 0;
    ++stats.scenes;
  }
  stats.recall = stats.scenes > 0 ? static_cast<double>(stats.hits) / stats.scenes : 0.0;
  return stats;
}

EvalReport evaluate_planner(const std::vector<ScenarioSample>& samples,
                            const TrajectoryVocabulary& vocab, const ModelParams& params,
                            const StageConfig& stages, TeacherLabelStore& labels,
                            const AggregationConfig& agg) {
  EvalReport report;
  double pdms_acc = 0.0, epdms_acc = 0.0;
  for (const auto& sample : samples) {
    const Scene scene = to_ego_frame(scene_at(sample.script, sample.t0));
    const auto result = plan(scene, vocab, params, stages, agg);
    const SubScores scores = labels.subscores(sample, result.best_i, result.best_j);
    pdms_acc += pdms(scores);
    epdms_acc += epdms(scores);
    ++report.scenes;
  }
  report.mean_pdms = report.scenes ? 100.0 * pdms_acc / report.scenes : 0.0;
  report.mean_epdms = report.scenes ? 100.0 * epdms_acc / report.scenes : 0.0;
  report.recall = coarse_recall(samples, vocab, params, stages);
  return report;
}

}  // namespace fplan
