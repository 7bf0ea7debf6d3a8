#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "fplan/commands.hpp"

using fplan::cli::RunConfig;

int main(int argc, char** argv) {
  CLI::App app{"fplan: factorized trajectory-vocabulary planner toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, dataset_path, vocab_path, checkpoint_prefix, labels_path,
      eval_dataset_path, trace_dir;
  bool seed_set = false;
  uint64_t seed_override = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--seed", seed_override, "override the config seed")
        ->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--out", out_path, "output path")->required();
  };

  auto* gen = app.add_subcommand("gen-scenarios", "generate scenario scripts + expert demos");
  add_common(gen);

  auto* build = app.add_subcommand("build-vocab", "cluster demos into a factorized vocabulary");
  add_common(build);
  build->add_option("--demos", dataset_path, "demo dataset (JSONL)")->required();

  auto* teach = app.add_subcommand("teach-cache", "precompute rule-teacher labels");
  add_common(teach);
  teach->add_option("--dataset", dataset_path)->required();
  teach->add_option("--vocab", vocab_path)->required();

  auto* train_cmd = app.add_subcommand("train", "train the scorer by distillation");
  add_common(train_cmd);
  train_cmd->add_option("--dataset", dataset_path)->required();
  train_cmd->add_option("--vocab", vocab_path)->required();
  train_cmd->add_option("--labels", labels_path, "teacher label cache (read or created)");

  auto* eval_cmd = app.add_subcommand("eval", "open-loop evaluation of a checkpoint");
  add_common(eval_cmd);
  eval_cmd->add_option("--dataset", dataset_path)->required();
  eval_cmd->add_option("--vocab", vocab_path)->required();
  eval_cmd->add_option("--checkpoint", checkpoint_prefix)->required();
  eval_cmd->add_option("--labels", labels_path);

  auto* sim_cmd = app.add_subcommand("simulate", "closed-loop episodes over all scripts");
  add_common(sim_cmd);
  sim_cmd->add_option("--dataset", dataset_path)->required();
  sim_cmd->add_option("--vocab", vocab_path)->required();
  sim_cmd->add_option("--checkpoint", checkpoint_prefix)->required();
  sim_cmd->add_option("--trace-dir", trace_dir, "write per-step trace CSVs here");

  auto* study = app.add_subcommand("scaling-study", "vocabulary density ladder sweep");
  add_common(study);
  study->add_option("--dataset", dataset_path, "training dataset")->required();
  study->add_option("--eval", eval_dataset_path, "held-out dataset")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = fplan::cli::load_config(config_path);
    if (seed_set) cfg.seed = seed_override;

    if (gen->parsed()) fplan::cli::cmd_gen_scenarios(cfg, out_path);
    else if (build->parsed()) fplan::cli::cmd_build_vocab(cfg, dataset_path, out_path);
    else if (teach->parsed()) fplan::cli::cmd_teach_cache(cfg, dataset_path, vocab_path, out_path);
    else if (train_cmd->parsed())
      fplan::cli::cmd_train(cfg, dataset_path, vocab_path, labels_path, out_path);
    else if (eval_cmd->parsed())
      fplan::cli::cmd_eval(cfg, dataset_path, vocab_path, checkpoint_prefix, labels_path, out_path);
    else if (sim_cmd->parsed())
      fplan::cli::cmd_simulate(cfg, dataset_path, vocab_path, checkpoint_prefix, out_path,
                               trace_dir);
    else if (study->parsed())
      fplan::cli::cmd_scaling_study(cfg, dataset_path, eval_dataset_path, out_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
