#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "fplan/io.hpp"
#include "fplan/vocabulary.hpp"
#include "support.hpp"

using namespace fplan;
using test::TestRng;

using test::make_arc_demo;
using test::mixed_demo_set;

namespace {

ArrXXb all_valid(int rows, int cols) { return ArrXXb::Constant(rows, cols, true); }

}  // namespace

TEST_CASE("kmeans recovers unit-square corners exactly") {
  MatX samples(2, 4);
  samples << 0, 0, 1, 1,
             0, 1, 0, 1;
  KMeansConfig kc{4, 100, 3};
  const auto res = kmeans(samples, all_valid(2, 4), kc);
  CHECK(res.cost == doctest::Approx(0.0).epsilon(1e-15));
  // Every sample must coincide with its assigned centroid.
  for (int i = 0; i < 4; ++i)
    CHECK((samples.col(i) - res.centroids.col(res.assignment[i])).norm() <= 1e-12);
}

TEST_CASE("kmeans with k=1 yields the arithmetic mean") {
  TestRng rng(11);
  MatX samples(3, 17);
  for (int i = 0; i < samples.cols(); ++i)
    for (int d = 0; d < 3; ++d) samples(d, i) = rng.uniform(-5.0, 5.0);
  KMeansConfig kc{1, 50, 0};
  const auto res = kmeans(samples, all_valid(3, 17), kc);
  CHECK(res.centroids.col(0).isApprox(samples.rowwise().mean(), 1e-12));
}

TEST_CASE("kmeans separates well-spaced gaussians") {
  TestRng rng(21);
  const int n = 200;
  MatX samples(4, n);
  std::vector<int> labels(n);
  const double centers[3] = {0.0, 10.0, 20.0};
  for (int i = 0; i < n; ++i) {
    labels[i] = i % 3;
    for (int d = 0; d < 4; ++d) samples(d, i) = centers[labels[i]] + rng.normal(0.0, 1.0);
  }
  KMeansConfig kc{3, 100, 5};
  const auto res = kmeans(samples, all_valid(4, n), kc);

  // Map each cluster to its majority generating component.
  int majority[3][3] = {};
  for (int i = 0; i < n; ++i) ++majority[res.assignment[i]][labels[i]];
  int agree = 0;
  for (int c = 0; c < 3; ++c) {
    int best = 0;
    for (int g = 1; g < 3; ++g)
      if (majority[c][g] > majority[c][best]) best = g;
    agree += majority[c][best];
  }
  CHECK(agree >= static_cast<int>(0.95 * n));
}

TEST_CASE("kmeans rejects k larger than the sample count") {
  MatX samples(2, 3);
  samples.setZero();
  KMeansConfig kc{4, 10, 0};
  CHECK_THROWS_AS(kmeans(samples, all_valid(2, 3), kc), std::invalid_argument);
}

TEST_CASE("kmeans cost is non-increasing across iterations") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    TestRng rng(900 + seed);
    const int n = 60;
    MatX samples(6, n);
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < 6; ++d) samples(d, i) = rng.uniform(-10.0, 10.0);
    double prev = std::numeric_limits<double>::infinity();
    for (int iters = 1; iters <= 12; ++iters) {
      KMeansConfig kc{5, iters, seed};
      const auto res = kmeans(samples, all_valid(6, n), kc);
      REQUIRE(res.cost <= prev + 1e-12);
      prev = res.cost;
    }
  }
}

TEST_CASE("kmeans cost is non-increasing with prefix masks") {
  FactorizationConfig cfg;
  const auto demos = mixed_demo_set(31, 80, cfg);
  const int path_len = cfg.path_size();
  MatX samples(2 * path_len, static_cast<int>(demos.size()));
  ArrXXb valid(2 * path_len, static_cast<int>(demos.size()));
  for (size_t i = 0; i < demos.size(); ++i) {
    const auto path = resample_path(demos[i].waypoints, cfg);
    for (int k = 0; k < path_len; ++k) {
      samples(2 * k, i) = path.points(0, k);
      samples(2 * k + 1, i) = path.points(1, k);
      valid(2 * k, i) = path.valid[k];
      valid(2 * k + 1, i) = path.valid[k];
    }
  }
  double prev = std::numeric_limits<double>::infinity();
  for (int iters = 1; iters <= 10; ++iters) {
    KMeansConfig kc{6, iters, 2};
    const auto res = kmeans(samples, valid, kc);
    REQUIRE(res.cost <= prev + 1e-12);
    prev = res.cost;
  }
}

TEST_CASE("build_path_vocab with one demo reproduces its path") {
  FactorizationConfig cfg;
  const auto demo = test::straight_constant_trajectory(5.0, 0.1, cfg.horizon_steps, cfg.dt);
  const auto vocab = build_path_vocab({demo}, 1, cfg, {1, 100, 0});
  const auto expected = resample_path(demo.waypoints, cfg);
  REQUIRE(vocab.size() == 1);
  CHECK((vocab.anchors[0].points - expected.points).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((vocab.anchors[0].valid == expected.valid).all());
}

TEST_CASE("build_path_vocab separates straight and turning families") {
  FactorizationConfig cfg;
  TestRng rng(77);
  std::vector<Trajectory> demos;
  for (int i = 0; i < 30; ++i)
    demos.push_back(make_arc_demo(rng.uniform(-0.005, 0.005), 5.0, 5.0, cfg));
  for (int i = 0; i < 30; ++i)
    demos.push_back(make_arc_demo(rng.uniform(0.08, 0.15), 5.0, 5.0, cfg));

  const auto vocab = build_path_vocab(demos, 2, cfg, {2, 100, 9});
  REQUIRE(vocab.size() == 2);
  // One anchor ends near y=0, the other bends clearly left.
  double end_y[2];
  for (int c = 0; c < 2; ++c) {
    const int last = vocab.anchors[c].valid_count() - 1;
    REQUIRE(last >= 0);
    end_y[c] = vocab.anchors[c].points(1, last);
  }
  const double lo = std::min(end_y[0], end_y[1]);
  const double hi = std::max(end_y[0], end_y[1]);
  CHECK(std::abs(lo) < 1.0);
  CHECK(hi > 2.0);
}

TEST_CASE("vocabulary build is deterministic under a fixed seed") {
  FactorizationConfig cfg;
  const auto demos = mixed_demo_set(13, 60, cfg);
  TrajectoryVocabulary a{build_path_vocab(demos, 8, cfg, {8, 100, 42}),
                         build_velocity_vocab(demos, 4, cfg, {4, 100, 42})};
  TrajectoryVocabulary b{build_path_vocab(demos, 8, cfg, {8, 100, 42}),
                         build_velocity_vocab(demos, 4, cfg, {4, 100, 42})};
  CHECK(io::vocabulary_to_json(a) == io::vocabulary_to_json(b));
}

TEST_CASE("vocabulary roundtrips through its file format") {
  FactorizationConfig cfg;
  const auto demos = mixed_demo_set(17, 40, cfg);
  TrajectoryVocabulary vocab{build_path_vocab(demos, 4, cfg, {4, 100, 1}),
                             build_velocity_vocab(demos, 3, cfg, {3, 100, 1})};
  const auto text = io::vocabulary_to_json(vocab);
  const auto back = io::vocabulary_from_json(text);
  CHECK(io::vocabulary_to_json(back) == text);

  auto corrupted = nlohmann::json::parse(text);
  corrupted["version"] = 999;
  CHECK_THROWS_AS(io::vocabulary_from_json(corrupted.dump()), std::runtime_error);
}

TEST_CASE("build_velocity_vocab collapses constant profiles") {
  FactorizationConfig cfg;
  std::vector<Trajectory> demos;
  for (int i = 0; i < 10; ++i)
    demos.push_back(test::straight_constant_trajectory(5.0, 0.0, cfg.horizon_steps, cfg.dt));
  const auto vocab = build_velocity_vocab(demos, 1, cfg, {1, 100, 0});
  REQUIRE(vocab.size() == 1);
  CHECK(vocab.anchors[0].speeds.isApproxToConstant(5.0, 1e-9));
}

TEST_CASE("build_velocity_vocab separates accel and decel families") {
  FactorizationConfig cfg;
  TestRng rng(5);
  std::vector<Trajectory> demos;
  for (int i = 0; i < 25; ++i) demos.push_back(make_arc_demo(0.0, 2.0, 7.0, cfg));
  for (int i = 0; i < 25; ++i) demos.push_back(make_arc_demo(0.0, 7.0, 2.0, cfg));
  const auto vocab = build_velocity_vocab(demos, 2, cfg, {2, 100, 3});
  REQUIRE(vocab.size() == 2);
  int increasing = 0, decreasing = 0;
  for (const auto& anchor : vocab.anchors) {
    const int t_steps = anchor.steps();
    if (anchor.speeds[t_steps - 1] > anchor.speeds[0]) ++increasing;
    if (anchor.speeds[t_steps - 1] < anchor.speeds[0]) ++decreasing;
    for (int t = 1; t < t_steps; ++t) {
      const double d = anchor.speeds[t] - anchor.speeds[t - 1];
      // Every anchor should be monotone within its family.
      if (anchor.speeds[t_steps - 1] > anchor.speeds[0]) REQUIRE(d >= -1e-9);
      else REQUIRE(d <= 1e-9);
    }
  }
  CHECK(increasing == 1);
  CHECK(decreasing == 1);
}

TEST_CASE("velocity anchors are never negative") {
  FactorizationConfig cfg;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const auto demos = mixed_demo_set(seed, 30, cfg);
    const auto vocab = build_velocity_vocab(demos, 4, cfg, {4, 100, seed});
    for (const auto& anchor : vocab.anchors) REQUIRE(anchor.speeds.minCoeff() >= 0.0);
  }
}

TEST_CASE("entry composes anchors lazily and matches an eager table") {
  FactorizationConfig cfg;
  const auto demos = mixed_demo_set(23, 120, cfg);
  TrajectoryVocabulary vocab{build_path_vocab(demos, 16, cfg, {16, 100, 7}),
                             build_velocity_vocab(demos, 8, cfg, {8, 100, 7})};

  std::vector<std::vector<Trajectory>> table(16, std::vector<Trajectory>(8));
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 8; ++j)
      table[i][j] = compose(vocab.paths.anchors[i], vocab.velocities.anchors[j]);

  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 8; ++j)
      REQUIRE((entry(vocab, i, j).waypoints - table[i][j].waypoints).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(entry(vocab, 16, 0), std::out_of_range);
  CHECK_THROWS_AS(entry(vocab, 0, 8), std::out_of_range);
  CHECK_THROWS_AS(entry(vocab, -1, 0), std::out_of_range);
}

TEST_CASE("entry of straight path and constant velocity is straight constant-speed") {
  FactorizationConfig cfg;
  const auto demo = test::straight_constant_trajectory(4.0, 0.0, cfg.horizon_steps, cfg.dt);
  TrajectoryVocabulary vocab{build_path_vocab({demo}, 1, cfg, {1, 100, 0}),
                             build_velocity_vocab({demo}, 1, cfg, {1, 100, 0})};
  const auto traj = entry(vocab, 0, 0);
  const auto vel = extract_velocity(traj);
  CHECK(vel.speeds.isApproxToConstant(4.0, 1e-9));
  CHECK(traj.waypoints.row(1).cwiseAbs().maxCoeff() <= 1e-9);

  // All-zero velocity anchor pins every waypoint at the origin.
  VelocityProfile zeros;
  zeros.dt = cfg.dt;
  zeros.speeds = VecX::Zero(cfg.horizon_steps);
  vocab.velocities.anchors.push_back(zeros);
  CHECK(entry(vocab, 0, 1).waypoints.isZero(0.0));
}

TEST_CASE("coverage_error with per-demo clusters stays within the roundtrip bound") {
  FactorizationConfig cfg;
  const auto demos = mixed_demo_set(29, 12, cfg);
  const int n = static_cast<int>(demos.size());
  TrajectoryVocabulary vocab{build_path_vocab(demos, n, cfg, {n, 100, 4}),
                             build_velocity_vocab(demos, n, cfg, {n, 100, 4})};
  const auto stats = coverage_error(vocab, demos);
  CHECK(stats.targets == n);
  CHECK(stats.mean_min_ade <= cfg.ds / 2 + 0.01);
}

TEST_CASE("coverage_error decreases along the density ladder") {
  FactorizationConfig cfg;
  const auto demos = mixed_demo_set(41, 300, cfg);
  const std::vector<Trajectory> heldout(demos.begin(), demos.begin() + 40);

  const int ladder[3][2] = {{64, 16}, {128, 32}, {256, 64}};
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& [np, nv] : ladder) {
    TrajectoryVocabulary vocab{build_path_vocab(demos, np, cfg, {np, 25, 8}),
                               build_velocity_vocab(demos, nv, cfg, {nv, 25, 8})};
    const auto stats = coverage_error(vocab, heldout);
    REQUIRE(stats.mean_min_ade < prev);
    prev = stats.mean_min_ade;
  }
}

TEST_CASE("coverage_error is monotone under anchor superset") {
  FactorizationConfig cfg;
  const auto demos = mixed_demo_set(53, 80, cfg);
  const std::vector<Trajectory> heldout(demos.begin(), demos.begin() + 20);

  TrajectoryVocabulary small{build_path_vocab(demos, 6, cfg, {6, 100, 2}),
                             build_velocity_vocab(demos, 3, cfg, {3, 100, 2})};
  const auto base = coverage_error(small, heldout);

  TrajectoryVocabulary extended = small;
  const auto extra = build_path_vocab(demos, 10, cfg, {10, 100, 99});
  extended.paths.anchors.insert(extended.paths.anchors.end(), extra.anchors.begin(),
                                extra.anchors.end());
  const auto more_paths = coverage_error(extended, heldout);
  CHECK(more_paths.mean_min_ade <= base.mean_min_ade + 1e-12);

  const auto extra_v = build_velocity_vocab(demos, 5, cfg, {5, 100, 99});
  extended.velocities.anchors.insert(extended.velocities.anchors.end(), extra_v.anchors.begin(),
                                     extra_v.anchors.end());
  const auto more_both = coverage_error(extended, heldout);
  CHECK(more_both.mean_min_ade <= more_paths.mean_min_ade + 1e-12);
}
