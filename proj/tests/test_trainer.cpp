#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fplan/expert.hpp"
#include "fplan/trainer.hpp"
#include "support.hpp"

using namespace fplan;

namespace {

FactorizationConfig toy_fcfg() {
  FactorizationConfig cfg;
  cfg.ds = 1.0;
  cfg.s_max = 16.0;
  cfg.dt = 0.5;
  cfg.horizon_steps = 6;
  return cfg;
}

struct ToyWorld {
  FactorizationConfig fcfg = toy_fcfg();
  TrajectoryVocabulary vocab;
  std::vector<ScenarioSample> samples;
  ModelParams initial;
  TrainConfig tcfg;

  explicit ToyWorld(uint64_t seed, int scenario_count = 1) {
    std::vector<Trajectory> demos = test::mixed_demo_set(seed, 60, fcfg);
    vocab = {build_path_vocab(demos, 8, fcfg, {8, 40, seed}),
             build_velocity_vocab(demos, 4, fcfg, {4, 40, seed})};
    for (int s = 0; s < scenario_count; ++s) {
      const auto kind = s % 2 == 0 ? ScenarioKind::kLeadVehicleCruise : ScenarioKind::kEmptyRoad;
      const auto made = make_samples(generate(kind, seed + s), {0.0}, fcfg);
      samples.insert(samples.end(), made.begin(), made.end());
    }
    ModelConfig mcfg;
    mcfg.dim = 32;
    mcfg.heads = 2;
    initial = ModelParams::init(mcfg, fcfg, seed + 99);
    tcfg.batch_size = 2;
    tcfg.seed = seed;
    tcfg.stages.stages = {{8, 4}, {4, 2}};
  }
};

}  // namespace

TEST_CASE("single-scene overfit cuts the loss by ninety percent") {
  ToyWorld world(1);
  TeacherLabelStore labels(&world.vocab, {});
  world.tcfg.steps = 500;
  // Sharper soft targets keep the cross-entropy floor (the target entropy)
  // out of the way of the 90% drop.
  world.tcfg.loss.lambda_path = 4.0;
  world.tcfg.loss.lambda_vel = 4.0;
  world.tcfg.loss.lambda_traj = 4.0;
  const auto result = train(world.samples, world.vocab, world.initial, labels, world.tcfg);
  REQUIRE(result.log.size() == 500);
  const double first = result.log.front().loss.total;
  const double last = result.log.back().loss.total;
  CHECK(first > 0.0);
  CHECK(last <= 0.1 * first);
}

TEST_CASE("training is deterministic under a fixed seed") {
  ToyWorld world(2, 3);
  world.tcfg.steps = 40;
  TeacherLabelStore labels_a(&world.vocab, {});
  const auto a = train(world.samples, world.vocab, world.initial, labels_a, world.tcfg);
  TeacherLabelStore labels_b(&world.vocab, {});
  const auto b = train(world.samples, world.vocab, world.initial, labels_b, world.tcfg);
  CHECK(a.params.flatten() == b.params.flatten()); // bitwise
  REQUIRE(a.log.size() == b.log.size());
  for (size_t i = 0; i < a.log.size(); ++i)
    REQUIRE(a.log[i].loss.total == b.log[i].loss.total);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  ToyWorld world(3);
  world.tcfg.steps = 10;
  world.tcfg.lr = 0.0;
  TeacherLabelStore labels(&world.vocab, {});
  const auto result = train(world.samples, world.vocab, world.initial, labels, world.tcfg);
  CHECK(result.params.flatten() == world.initial.flatten());
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  ToyWorld world(4);
  world.tcfg.steps = 5;
  auto broken = world.initial;
  broken.head_path.b = std::numeric_limits<double>::infinity();
  TeacherLabelStore labels(&world.vocab, {});
  CHECK_THROWS_AS(train(world.samples, world.vocab, broken, labels, world.tcfg),
                  std::runtime_error);
}

TEST_CASE("training log serializes to CSV") {
  ToyWorld world(5);
  world.tcfg.steps = 3;
  TeacherLabelStore labels(&world.vocab, {});
  const auto result = train(world.samples, world.vocab, world.initial, labels, world.tcfg);
  const auto csv = train_log_to_csv(result.log);
  CHECK(csv.rfind("step,l_path,l_vel,l_traj,l_metric,total\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  // The breakdown identity holds on every logged row.
  for (const auto& row : result.log)
    REQUIRE(row.loss.total ==
            doctest::Approx(row.loss.path + row.loss.vel + row.loss.traj + row.loss.metric)
                .epsilon(1e-12));
}

TEST_CASE("teacher label store is consistent and byte-stable") {
  ToyWorld world(6, 2);
  TeacherLabelStore store(&world.vocab, {});
  const auto& sample = world.samples.front();

  // Labels agree with a direct full-grid teach_batch.
  std::vector<Trajectory> grid;
  for (int i = 0; i < world.vocab.num_paths(); ++i)
    for (int j = 0; j < world.vocab.num_velocities(); ++j)
      grid.push_back(entry(world.vocab, i, j));
  const auto direct = teach_batch(grid, sample.script, sample.t0, {});
  for (int i = 0; i < world.vocab.num_paths(); ++i) {
    for (int j = 0; j < world.vocab.num_velocities(); ++j) {
      const auto got = store.subscores(sample, i, j);
      const auto& want = direct[i * world.vocab.num_velocities() + j];
      REQUIRE(got.nc == want.nc);
      REQUIRE(got.dac == want.dac);
      REQUIRE(got.ttc == want.ttc);
      REQUIRE(got.comfort == want.comfort);
      REQUIRE(got.lk == want.lk);
      REQUIRE(got.ep == doctest::Approx(want.ep).epsilon(1e-6)); // stored as float
    }
  }

  // Byte-identical regeneration and JSONL roundtrip.
  for (const auto& s : world.samples) store.ensure(s);
  const std::string snapshot = store.to_jsonl();
  TeacherLabelStore rebuilt(&world.vocab, {});
  for (const auto& s : world.samples) rebuilt.ensure(s);
  CHECK(rebuilt.to_jsonl() == snapshot);

  TeacherLabelStore loaded(&world.vocab, {});
  loaded.load_jsonl(snapshot, world.samples);
  CHECK(loaded.to_jsonl() == snapshot);
  CHECK(loaded.computed_entries() == store.computed_entries());
}
