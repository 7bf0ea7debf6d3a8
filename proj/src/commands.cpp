#include "fplan/commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <set>

#include <json.hpp>

#include "fplan/expert.hpp"
#include "fplan/io.hpp"
#include "fplan/labels.hpp"

namespace fplan::cli {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key))
      throw std::invalid_argument("config: unknown key \"" + key + "\" in " + where);
  }
}

std::vector<std::pair<int, int>> parse_stage_list(const json& arr, const std::string& where) {
  std::vector<std::pair<int, int>> out;
  for (const auto& stage : arr) {
    if (!stage.is_array() || stage.size() != 2)
      throw std::invalid_argument("config: " + where + " entries must be [K_p, K_v]");
    out.push_back({stage[0].get<int>(), stage[1].get<int>()});
  }
  return out;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  const json j = json::parse(text);
  RunConfig cfg;
  check_keys(j,
             {"seed", "factorization", "vocabulary", "model", "stages", "training", "aggregation",
              "teacher", "scenarios", "simulation", "scaling"},
             "top level");
  cfg.seed = j.value("seed", cfg.seed);

  if (j.contains("factorization")) {
    const auto& f = j.at("factorization");
    check_keys(f, {"ds", "s_max", "dt", "horizon"}, "factorization");
    cfg.fcfg.ds = f.value("ds", cfg.fcfg.ds);
    cfg.fcfg.s_max = f.value("s_max", cfg.fcfg.s_max);
    cfg.fcfg.dt = f.value("dt", cfg.fcfg.dt);
    cfg.fcfg.horizon_steps = f.value("horizon", cfg.fcfg.horizon_steps);
    cfg.fcfg.validate();
  }
  if (j.contains("vocabulary")) {
    const auto& v = j.at("vocabulary");
    check_keys(v, {"n_paths", "n_velocities", "kmeans_iters"}, "vocabulary");
    cfg.n_paths = v.value("n_paths", cfg.n_paths);
    cfg.n_velocities = v.value("n_velocities", cfg.n_velocities);
    cfg.kmeans_iters = v.value("kmeans_iters", cfg.kmeans_iters);
    if (cfg.n_paths < 1 || cfg.n_velocities < 1 || cfg.kmeans_iters < 1)
      throw std::invalid_argument("config: vocabulary sizes must be >= 1");
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m,
               {"dim", "heads", "dfa_sigma", "map_token_spacing", "map_window_back",
                "map_window_ahead", "path_cross_attention"},
               "model");
    cfg.mcfg.dim = m.value("dim", cfg.mcfg.dim);
    cfg.mcfg.heads = m.value("heads", cfg.mcfg.heads);
    cfg.mcfg.dfa_sigma = m.value("dfa_sigma", cfg.mcfg.dfa_sigma);
    cfg.mcfg.map_token_spacing = m.value("map_token_spacing", cfg.mcfg.map_token_spacing);
    cfg.mcfg.map_window_back = m.value("map_window_back", cfg.mcfg.map_window_back);
    cfg.mcfg.map_window_ahead = m.value("map_window_ahead", cfg.mcfg.map_window_ahead);
    cfg.mcfg.path_cross_attention = m.value("path_cross_attention", cfg.mcfg.path_cross_attention);
    if (cfg.mcfg.dim < 2 || cfg.mcfg.heads < 1 || cfg.mcfg.dim % cfg.mcfg.heads != 0)
      throw std::invalid_argument("config: model dim must be a positive multiple of heads");
  }
  if (j.contains("stages")) {
    cfg.stages.stages = parse_stage_list(j.at("stages"), "stages");
    cfg.stages.validate();
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    check_keys(t,
               {"steps", "batch_size", "lr", "lambda_path", "lambda_vel", "lambda_traj", "alpha",
                "metric_label_smoothing", "recovery_rounds", "recovery_steps"},
               "training");
    cfg.tcfg.steps = t.value("steps", cfg.tcfg.steps);
    cfg.tcfg.batch_size = t.value("batch_size", cfg.tcfg.batch_size);
    cfg.tcfg.lr = t.value("lr", cfg.tcfg.lr);
    cfg.tcfg.loss.lambda_path = t.value("lambda_path", cfg.tcfg.loss.lambda_path);
    cfg.tcfg.loss.lambda_vel = t.value("lambda_vel", cfg.tcfg.loss.lambda_vel);
    cfg.tcfg.loss.lambda_traj = t.value("lambda_traj", cfg.tcfg.loss.lambda_traj);
    cfg.tcfg.loss.alpha = t.value("alpha", cfg.tcfg.loss.alpha);
    cfg.tcfg.loss.metric_label_smoothing =
        t.value("metric_label_smoothing", cfg.tcfg.loss.metric_label_smoothing);
    cfg.recovery.rounds = t.value("recovery_rounds", cfg.recovery.rounds);
    cfg.recovery.round_steps = t.value("recovery_steps", cfg.recovery.round_steps);
    if (cfg.tcfg.steps < 0 || cfg.tcfg.batch_size < 1)
      throw std::invalid_argument("config: training steps/batch_size out of range");
  }
  if (j.contains("aggregation")) {
    const auto& a = j.at("aggregation");
    check_keys(a, {"imitation_beta"}, "aggregation");
    cfg.agg.imitation_beta = a.value("imitation_beta", cfg.agg.imitation_beta);
  }
  if (j.contains("teacher")) {
    const auto& t = j.at("teacher");
    check_keys(t, {"ttc_horizon", "max_abs_accel", "max_abs_jerk", "max_lat_accel", "lk_margin"},
               "teacher");
    cfg.thresholds.ttc_horizon = t.value("ttc_horizon", cfg.thresholds.ttc_horizon);
    cfg.thresholds.max_abs_accel = t.value("max_abs_accel", cfg.thresholds.max_abs_accel);
    cfg.thresholds.max_abs_jerk = t.value("max_abs_jerk", cfg.thresholds.max_abs_jerk);
    cfg.thresholds.max_lat_accel = t.value("max_lat_accel", cfg.thresholds.max_lat_accel);
    cfg.thresholds.lk_margin = t.value("lk_margin", cfg.thresholds.lk_margin);
  }
  if (j.contains("scenarios")) {
    const auto& s = j.at("scenarios");
    check_keys(s, {"count", "kinds", "t0_offsets"}, "scenarios");
    cfg.scenarios.count = s.value("count", cfg.scenarios.count);
    if (s.contains("kinds")) {
      cfg.scenarios.kinds.clear();
      for (const auto& name : s.at("kinds"))
        cfg.scenarios.kinds.push_back(scenario_kind_from_string(name.get<std::string>()));
      if (cfg.scenarios.kinds.empty()) throw std::invalid_argument("config: scenarios.kinds empty");
    }
    if (s.contains("t0_offsets")) {
      cfg.scenarios.t0_offsets.clear();
      for (const auto& t0 : s.at("t0_offsets")) cfg.scenarios.t0_offsets.push_back(t0.get<double>());
      if (cfg.scenarios.t0_offsets.empty())
        throw std::invalid_argument("config: scenarios.t0_offsets empty");
    }
    if (cfg.scenarios.count < 1) throw std::invalid_argument("config: scenarios.count must be >= 1");
  }
  if (j.contains("simulation")) {
    const auto& s = j.at("simulation");
    check_keys(s, {"replan_hz", "sim_dt", "steer_limit", "accel_min", "accel_max", "speed_gain",
                   "success_completion"},
               "simulation");
    cfg.sim.replan_hz = s.value("replan_hz", cfg.sim.replan_hz);
    cfg.sim.sim_dt = s.value("sim_dt", cfg.sim.sim_dt);
    cfg.sim.steer_limit = s.value("steer_limit", cfg.sim.steer_limit);
    cfg.sim.accel_min = s.value("accel_min", cfg.sim.accel_min);
    cfg.sim.accel_max = s.value("accel_max", cfg.sim.accel_max);
    cfg.sim.speed_gain = s.value("speed_gain", cfg.sim.speed_gain);
    cfg.success_completion = s.value("success_completion", cfg.success_completion);
  }
  if (j.contains("scaling")) {
    const auto& s = j.at("scaling");
    check_keys(s, {"ladder", "seeds", "train_steps", "train_batch", "eval_count"}, "scaling");
    if (s.contains("ladder")) cfg.scaling.ladder = parse_stage_list(s.at("ladder"), "scaling.ladder");
    cfg.scaling.seeds = s.value("seeds", cfg.scaling.seeds);
    cfg.scaling.train_steps = s.value("train_steps", cfg.scaling.train_steps);
    cfg.scaling.train_batch = s.value("train_batch", cfg.scaling.train_batch);
    cfg.scaling.eval_count = s.value("eval_count", cfg.scaling.eval_count);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return parse_config_text(io::read_file(path));
}

void cmd_gen_scenarios(const RunConfig& cfg, const std::string& out_path) {
  std::vector<ScenarioSample> samples;
  samples.reserve(cfg.scenarios.count);
  int scenario_idx = 0;
  while (static_cast<int>(samples.size()) < cfg.scenarios.count) {
    const ScenarioKind kind = cfg.scenarios.kinds[scenario_idx % cfg.scenarios.kinds.size()];
    const uint64_t seed = cfg.seed * 1000003ull + scenario_idx;
    const auto script = generate(kind, seed);
    for (auto& sample : make_samples(script, cfg.scenarios.t0_offsets, cfg.fcfg)) {
      if (static_cast<int>(samples.size()) >= cfg.scenarios.count) break;
      samples.push_back(std::move(sample));
    }
    ++scenario_idx;
  }
  io::save_dataset(samples, out_path);
  std::printf("gen-scenarios: wrote %d samples to %s (hash %016llx)\n",
              static_cast<int>(samples.size()), out_path.c_str(),
              static_cast<unsigned long long>(io::file_hash(out_path)));
}

namespace {

TrajectoryVocabulary build_vocab_from(const std::vector<ScenarioSample>& samples, int n_paths,
                                      int n_velocities, const FactorizationConfig& fcfg,
                                      int kmeans_iters, uint64_t seed) {
  std::vector<Trajectory> demos;
  demos.reserve(samples.size());
  for (const auto& sample : samples) demos.push_back(sample.expert);
  return {build_path_vocab(demos, n_paths, fcfg, {n_paths, kmeans_iters, seed}),
          build_velocity_vocab(demos, n_velocities, fcfg, {n_velocities, kmeans_iters, seed})};
}

std::vector<Trajectory> heldout_slice(const std::vector<ScenarioSample>& samples) {
  std::vector<Trajectory> heldout;
  for (size_t i = 0; i < samples.size(); i += 5) heldout.push_back(samples[i].expert);
  return heldout;
}

uint64_t vocab_hash_of(const TrajectoryVocabulary& vocab) {
  return io::fnv1a64(io::vocabulary_to_json(vocab));
}

ModelParams init_params_for(const RunConfig& cfg, const TrajectoryVocabulary& vocab,
                            uint64_t seed) {
  return ModelParams::init(cfg.mcfg, vocab.paths.cfg, seed);
}

void require_vocab_match(const io::Checkpoint& ckpt, const TrajectoryVocabulary& vocab) {
  if (ckpt.vocab_hash != vocab_hash_of(vocab))
    throw std::runtime_error("checkpoint/vocabulary mismatch: refusing to evaluate");
}

}  // namespace

void cmd_build_vocab(const RunConfig& cfg, const std::string& demos_path,
                     const std::string& out_path) {
  const auto samples = io::load_dataset(demos_path);
  if (samples.empty()) throw std::runtime_error("build-vocab: empty demo dataset");
  const auto vocab = build_vocab_from(samples, cfg.n_paths, cfg.n_velocities, cfg.fcfg,
                                      cfg.kmeans_iters, cfg.seed);
  io::save_vocabulary(vocab, out_path);

  const auto stats = coverage_error(vocab, heldout_slice(samples));
  json summary;
  summary["n_paths"] = vocab.num_paths();
  summary["n_velocities"] = vocab.num_velocities();
  summary["entries"] = vocab.num_entries();
  summary["coverage_mean_min_ade"] = stats.mean_min_ade;
  summary["coverage_p90_min_ade"] = stats.p90_min_ade;
  summary["coverage_targets"] = stats.targets;
  std::printf("build-vocab: %s\n", summary.dump().c_str());
}

void cmd_teach_cache(const RunConfig& cfg, const std::string& dataset_path,
                     const std::string& vocab_path, const std::string& out_path) {
  const auto samples = io::load_dataset(dataset_path);
  const auto vocab = io::load_vocabulary(vocab_path);
  TeacherLabelStore store(&vocab, cfg.thresholds);
  for (const auto& sample : samples) store.ensure(sample);
  io::write_file(out_path, store.to_jsonl());
  std::printf("teach-cache: %ld labels for %d samples -> %s\n", store.computed_entries(),
              static_cast<int>(samples.size()), out_path.c_str());
}

void cmd_train(const RunConfig& cfg, const std::string& dataset_path,
               const std::string& vocab_path, const std::string& labels_path,
               const std::string& out_prefix) {
  const auto samples = io::load_dataset(dataset_path);
  const auto vocab = io::load_vocabulary(vocab_path);
  TeacherLabelStore store(&vocab, cfg.thresholds);
  const bool labels_on_disk = !labels_path.empty() && std::filesystem::exists(labels_path);
  if (labels_on_disk) store.load_jsonl(io::read_file(labels_path), samples);

  TrainConfig tcfg = cfg.tcfg;
  tcfg.seed = cfg.seed;
  tcfg.stages = cfg.stages;
  const auto initial = init_params_for(cfg, vocab, cfg.seed + 1);
  const auto result = train_with_recovery(samples, vocab, initial, store, tcfg, cfg.recovery);

  io::save_checkpoint(result.params, tcfg.steps, vocab_hash_of(vocab), out_prefix);
  io::write_file(out_prefix + "_log.csv", train_log_to_csv(result.log));
  if (!labels_path.empty() && !labels_on_disk) io::write_file(labels_path, store.to_jsonl());
  const double final_loss = result.log.empty() ? 0.0 : result.log.back().loss.total;
  std::printf("train: %d steps, final loss %.6f -> %s\n", tcfg.steps, final_loss,
              out_prefix.c_str());
}

void cmd_eval(const RunConfig& cfg, const std::string& dataset_path, const std::string& vocab_path,
              const std::string& checkpoint_prefix, const std::string& labels_path,
              const std::string& out_path) {
  const auto samples = io::load_dataset(dataset_path);
  const auto vocab = io::load_vocabulary(vocab_path);
  const auto ckpt = io::load_checkpoint(checkpoint_prefix);
  require_vocab_match(ckpt, vocab);

  TeacherLabelStore store(&vocab, cfg.thresholds);
  if (!labels_path.empty() && std::filesystem::exists(labels_path))
    store.load_jsonl(io::read_file(labels_path), samples);

  const auto report = evaluate_planner(samples, vocab, ckpt.params, cfg.stages, store, cfg.agg);

  // Instrument one plan to report the fine-stage candidate count.
  const Scene probe = to_ego_frame(scene_at(samples.front().script, samples.front().t0));
  const auto probe_plan = plan(probe, vocab, ckpt.params, cfg.stages, cfg.agg);

  json out;
  out["scenes"] = report.scenes;
  out["mean_pdms"] = report.mean_pdms;
  out["mean_epdms"] = report.mean_epdms;
  out["coarse_recall"] = report.recall.recall;
  out["coarse_recall_hits"] = report.recall.hits;
  out["fine_candidates"] = probe_plan.fine_candidates_scored;
  io::write_file(out_path, out.dump(1) + "\n");
  std::printf("eval: %s\n", out.dump().c_str());
}

void cmd_simulate(const RunConfig& cfg, const std::string& dataset_path,
                  const std::string& vocab_path, const std::string& checkpoint_prefix,
                  const std::string& out_path, const std::string& trace_dir) {
  const auto samples = io::load_dataset(dataset_path);
  const auto vocab = io::load_vocabulary(vocab_path);
  const auto ckpt = io::load_checkpoint(checkpoint_prefix);
  require_vocab_match(ckpt, vocab);

  auto planner = [&](const Scene& scene) {
    return plan(scene, vocab, ckpt.params, cfg.stages, cfg.agg);
  };

  json episodes = json::array();
  int successes = 0, collisions = 0, count = 0;
  double completion_acc = 0.0;
  for (const auto& sample : samples) {
    if (sample.t0 != 0.0) continue; // one episode per scenario, from its start
    const auto report = run_episode(sample.script, planner, vocab.paths.cfg, cfg.sim);
    const bool success = !report.collision && report.completion >= cfg.success_completion;
    successes += success ? 1 : 0;
    collisions += report.collision ? 1 : 0;
    completion_acc += report.completion;
    json row = json::parse(episode_to_json(report));
    row["id"] = sample.id;
    row["success"] = success;
    episodes.push_back(row);
    if (!trace_dir.empty()) {
      char name[64];
      std::snprintf(name, sizeof(name), "/episode_%04d.csv", count);
      io::write_file(trace_dir + name, episode_trace_csv(report));
    }
    ++count;
  }
  if (count == 0) throw std::runtime_error("simulate: no t0=0 scenarios in the dataset");

  json out;
  out["episodes"] = count;
  out["success_rate"] = static_cast<double>(successes) / count;
  out["collisions"] = collisions;
  out["mean_completion"] = completion_acc / count;
  out["per_episode"] = episodes;
  io::write_file(out_path, out.dump(1) + "\n");
  std::printf("simulate: %d episodes, success %.3f, collisions %d, mean completion %.3f\n", count,
              static_cast<double>(successes) / count, collisions, completion_acc / count);
}

void cmd_scaling_study(const RunConfig& cfg, const std::string& train_dataset_path,
                       const std::string& eval_dataset_path, const std::string& out_csv) {
  const auto train_samples = io::load_dataset(train_dataset_path);
  auto eval_samples = io::load_dataset(eval_dataset_path);
  if (static_cast<int>(eval_samples.size()) > cfg.scaling.eval_count)
    eval_samples.resize(cfg.scaling.eval_count);

  std::vector<Trajectory> eval_demos;
  for (const auto& sample : eval_samples) eval_demos.push_back(sample.expert);

  std::string csv =
      "n_paths,n_velocities,total_anchors,coverage_min_ade,mean_pdms,fine_candidates,wall_time_s\n";
  for (const auto& [n_paths, n_velocities] : cfg.scaling.ladder) {
    const auto t_start = std::chrono::steady_clock::now();
    const auto vocab = build_vocab_from(train_samples, n_paths, n_velocities, cfg.fcfg,
                                        cfg.kmeans_iters, cfg.seed);
    const auto coverage = coverage_error(vocab, eval_demos);

    TeacherLabelStore store(&vocab, cfg.thresholds); // shared across seeds
    double pdms_acc = 0.0;
    long fine_count = 0;
    for (int s = 0; s < cfg.scaling.seeds; ++s) {
      TrainConfig tcfg = cfg.tcfg;
      tcfg.steps = cfg.scaling.train_steps;
      tcfg.batch_size = cfg.scaling.train_batch;
      tcfg.seed = cfg.seed + s;
      tcfg.stages = cfg.stages;
      const auto initial = init_params_for(cfg, vocab, cfg.seed + 1000 + s);
      const auto trained = train(train_samples, vocab, initial, store, tcfg);
      const auto report =
          evaluate_planner(eval_samples, vocab, trained.params, cfg.stages, store, cfg.agg);
      pdms_acc += report.mean_pdms;

      const Scene probe = to_ego_frame(scene_at(eval_samples.front().script, eval_samples.front().t0));
      fine_count = plan(probe, vocab, trained.params, cfg.stages, cfg.agg).fine_candidates_scored;
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    char line[256];
    std::snprintf(line, sizeof(line), "%d,%d,%ld,%.9g,%.9g,%ld,%.3f\n", n_paths, n_velocities,
                  static_cast<long>(n_paths) * n_velocities, coverage.mean_min_ade,
                  pdms_acc / cfg.scaling.seeds, fine_count, wall);
    csv += line;
    std::printf("scaling-study: %s", line);
  }
  io::write_file(out_csv, csv);
}

}  // namespace fplan::cli
