#include "fplan/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "fplan/expert.hpp"
#include "fplan/random.hpp"
#include "fplan/simulate.hpp"

namespace fplan {

namespace {

// Seeded sample stream: reshuffled index epochs, deterministic.
class SampleStream {
 public:
  SampleStream(int count, uint64_t seed) : count_(count), rng_(seed) { refill(); }

  int next() {
    if (at_ == static_cast<int>(order_.size())) refill();
    return order_[at_++];
  }

 private:
  void refill() {
    order_.resize(count_);
    std::iota(order_.begin(), order_.end(), 0);
    for (int i = count_ - 1; i > 0; --i) std::swap(order_[i], order_[rng_.uniform_int(0, i)]);
    at_ = 0;
  }

  int count_;
  Rng rng_;
  std::vector<int> order_;
  int at_ = 0;
};

}  // namespace

TrainResult train(const std::vector<ScenarioSample>& dataset, const TrajectoryVocabulary& vocab,
                  const ModelParams& initial, TeacherLabelStore& labels, const TrainConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  cfg.stages.validate();

  TrainResult result;
  result.params = initial;
  const long n_params = initial.num_params();
  VecX flat = initial.flatten();
  VecX m = VecX::Zero(n_params);
  VecX v = VecX::Zero(n_params);

  SampleStream stream(static_cast<int>(dataset.size()), cfg.seed);
  const FactorizationConfig& fcfg = vocab.paths.cfg;

  for (int step = 0; step < cfg.steps; ++step) {
    ModelParams grad = result.params.zeros_like();
    LossBreakdown step_loss;

    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& sample = dataset[stream.next()];
      const Scene scene = to_ego_frame(scene_at(sample.script, sample.t0));

      const auto coarse = coarse_forward(result.params, scene, vocab);
      const auto pruned = prune_stages(coarse.path_scores, coarse.vel_scores, cfg.stages);
      std::vector<CandidateIdx> cands;
      cands.reserve(pruned.paths.size() * pruned.vels.size());
      for (int i : pruned.paths)
        for (int j : pruned.vels) cands.push_back({i, j});
      const auto fine = fine_forward(result.params, coarse, vocab, cands);

      const auto [gt_path, gt_vel] = factorize(sample.expert, fcfg);
      MatX metric_labels(kNumMetricHeads, static_cast<int>(cands.size()));
      for (size_t c = 0; c < cands.size(); ++c) {
        const auto row = labels.labels(sample, cands[c].i, cands[c].j);
        for (int mm = 0; mm < kNumMetricHeads; ++mm) metric_labels(mm, static_cast<int>(c)) = row[mm];
      }

      VecX dsp, dsv, dst;
      MatX dsm;
      const auto loss = loss_forward(
          coarse.path_scores, coarse.vel_scores, fine.traj_logits, fine.metric_logits,
          path_target_distances(vocab.paths, gt_path),
          velocity_target_distances(vocab.velocities, gt_vel),
          trajectory_target_distances(fine.composed, sample.expert), metric_labels, cfg.loss, &dsp,
          &dsv, &dst, &dsm);
      scorer_backward(result.params, coarse, fine, dsp, dsv, dst, dsm, grad);

      step_loss.path += loss.path;
      step_loss.vel += loss.vel;
      step_loss.traj += loss.traj;
      step_loss.metric += loss.metric;
      step_loss.total += loss.total;
    }

    const double inv_b = 1.0 / cfg.batch_size;
    step_loss.path *= inv_b;
    step_loss.vel *= inv_b;
    step_loss.traj *= inv_b;
    step_loss.metric *= inv_b;
    step_loss.total *= inv_b;
    if (!std::isfinite(step_loss.total)) {
      char msg[128];
      std::snprintf(msg, sizeof(msg), "train: loss diverged (non-finite total at step %d)", step);
      throw std::runtime_error(msg);
    }

    VecX g = grad.flatten() * inv_b;
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
    v = cfg.adam_beta2 * v.array().matrix() + (1.0 - cfg.adam_beta2) * g.cwiseProduct(g);
    const double bias1 = 1.0 - std::pow(cfg.adam_beta1, step + 1);
    const double bias2 = 1.0 - std::pow(cfg.adam_beta2, step + 1);
    flat -= (cfg.lr / bias1) * m.cwiseQuotient(((v / bias2).cwiseSqrt().array() + cfg.adam_eps).matrix());
    result.params.unflatten(flat);

    result.log.push_back({step, step_loss});
  }
  return result;
}

TrainResult train_with_recovery(const std::vector<ScenarioSample>& dataset,
                                const TrajectoryVocabulary& vocab, const ModelParams& initial,
                                TeacherLabelStore& labels, const TrainConfig& cfg,
                                const RecoveryConfig& recovery) {
  TrainResult result = train(dataset, vocab, initial, labels, cfg);
  if (recovery.rounds < 1) return result;

  const FactorizationConfig& fcfg = vocab.paths.cfg;
  std::vector<ScenarioSample> merged = dataset;
  for (int round = 0; round < recovery.rounds; ++round) {
    std::vector<ScenarioSample> harvested;
    auto planner = [&](const Scene& scene) {
      return plan(scene, vocab, result.params, cfg.stages);
    };
    for (const auto& sample : dataset) {
      if (sample.t0 != 0.0) continue; // roll each scenario once, from its start
      if (static_cast<int>(harvested.size()) >= recovery.max_samples_per_round) break;
      SimConfig scfg;
      const auto report = run_episode(sample.script, planner, fcfg, scfg);
      std::vector<VisitedState> states;
      double next_harvest = recovery.harvest_stride_s;
      for (const auto& step : report.steps) {
        if (step.t + 1e-9 < next_harvest) continue;
        next_harvest += recovery.harvest_stride_s;
        states.push_back({step.t, Vec2(step.x, step.y), step.heading, step.speed});
      }
      for (auto& rec : make_recovery_samples(sample.script, states, fcfg)) {
        if (static_cast<int>(harvested.size()) >= recovery.max_samples_per_round) break;
        harvested.push_back(std::move(rec));
      }
    }
    if (harvested.empty()) break;
    merged.insert(merged.end(), harvested.begin(), harvested.end());

    TrainConfig round_cfg = cfg;
    round_cfg.seed = cfg.seed + 7919 * (round + 1);
    if (recovery.round_steps > 0) round_cfg.steps = recovery.round_steps;
    const ModelParams& start = recovery.continue_from_previous ? result.params : initial;
    auto round_result = train(merged, vocab, start, labels, round_cfg);
    result.params = std::move(round_result.params);
    result.log.insert(result.log.end(), round_result.log.begin(), round_result.log.end());
  }
  return result;
}

std::string train_log_to_csv(const std::vector<TrainLogRow>& log) {
  std::string out = "step,l_path,l_vel,l_traj,l_metric,total\n";
  char line[192];
  for (const auto& row : log) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", row.step,
                  row.loss.path, row.loss.vel, row.loss.traj, row.loss.metric, row.loss.total);
    out += line;
  }
  return out;
}

}  // namespace fplan
