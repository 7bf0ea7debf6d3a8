#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fplan/scorer.hpp"
#include "support.hpp"

using namespace fplan;
using test::TestRng;

namespace {

FactorizationConfig toy_fcfg() {
  FactorizationConfig cfg;
  cfg.ds = 1.0;
  cfg.s_max = 10.0;
  cfg.dt = 0.5;
  cfg.horizon_steps = 4;
  return cfg;
}

ModelConfig toy_mcfg(bool path_attention = false) {
  ModelConfig cfg;
  cfg.dim = 32;
  cfg.heads = 2;
  cfg.path_cross_attention = path_attention;
  return cfg;
}

TrajectoryVocabulary toy_vocab(uint64_t seed, int num_paths = 8, int num_vels = 4) {
  const auto fcfg = toy_fcfg();
  const auto demos = test::mixed_demo_set(seed, 60, fcfg);
  return {build_path_vocab(demos, num_paths, fcfg, {num_paths, 50, seed}),
          build_velocity_vocab(demos, num_vels, fcfg, {num_vels, 50, seed})};
}

Scene toy_scene(uint64_t seed) {
  return to_ego_frame(scene_at(generate(ScenarioKind::kLeadVehicleCruise, seed), 0.0));
}

std::vector<CandidateIdx> all_candidates(const TrajectoryVocabulary& vocab) {
  std::vector<CandidateIdx> out;
  for (int i = 0; i < vocab.num_paths(); ++i)
    for (int j = 0; j < vocab.num_velocities(); ++j) out.push_back({i, j});
  return out;
}

// Total loss at a parameter vector with everything else fixed; the common
// closure for finite-difference checks.
struct LossProbe {
  TrajectoryVocabulary vocab;
  Scene scene;
  GeometricPath gt_path;
  VelocityProfile gt_vel;
  Trajectory gt_traj;
  MatX labels;
  LossWeights weights;
  ModelParams shape; // carries cfg + input widths

  double operator()(const VecX& flat) {
    ModelParams p = shape;
    p.unflatten(flat);
    const auto coarse = coarse_forward(p, scene, vocab);
    const auto fine = fine_forward(p, coarse, vocab, all_candidates(vocab));
    const VecX d_tau = trajectory_target_distances(fine.composed, gt_traj);
    return loss_forward(coarse.path_scores, coarse.vel_scores, fine.traj_logits,
                        fine.metric_logits, path_target_distances(vocab.paths, gt_path),
                        velocity_target_distances(vocab.velocities, gt_vel), d_tau, labels, weights,
                        nullptr, nullptr, nullptr, nullptr)
        .total;
  }

  VecX analytic_grad(const VecX& flat) {
    ModelParams p = shape;
    p.unflatten(flat);
    const auto coarse = coarse_forward(p, scene, vocab);
    const auto fine = fine_forward(p, coarse, vocab, all_candidates(vocab));
    const VecX d_tau = trajectory_target_distances(fine.composed, gt_traj);
    VecX dsp, dsv, dst;
    MatX dsm;
    loss_forward(coarse.path_scores, coarse.vel_scores, fine.traj_logits, fine.metric_logits,
                 path_target_distances(vocab.paths, gt_path),
                 velocity_target_distances(vocab.velocities, gt_vel), d_tau, labels, weights, &dsp,
                 &dsv, &dst, &dsm);
    ModelParams grad = p.zeros_like();
    scorer_backward(p, coarse, fine, dsp, dsv, dst, dsm, grad);
    return grad.flatten();
  }
};

LossProbe make_probe(uint64_t seed, bool path_attention) {
  LossProbe probe;
  probe.vocab = toy_vocab(seed);
  probe.scene = toy_scene(seed);
  const auto fcfg = toy_fcfg();
  const auto expert = test::make_arc_demo(0.02, 4.0, 5.0, fcfg);
  auto [gp, gv] = factorize(expert, fcfg);
  probe.gt_path = gp;
  probe.gt_vel = gv;
  probe.gt_traj = expert;
  TestRng rng(seed * 7 + 1);
  probe.labels.resize(kNumMetricHeads, probe.vocab.num_entries());
  for (int c = 0; c < probe.labels.cols(); ++c)
    for (int m = 0; m < kNumMetricHeads; ++m)
      probe.labels(m, c) = m == kMetricEp ? rng.uniform(0.0, 1.0) : rng.uniform_int(0, 1);
  probe.shape = ModelParams::init(toy_mcfg(path_attention), fcfg, seed);
  return probe;
}

}  // namespace

TEST_CASE("encode_scene token count is agents plus centerline samples") {
  Mat2X line(2, 2);
  line << 0, 20,
          0, 0;
  Scene scene;
  scene.corridor = make_corridor(line, 3.5);
  scene.ego.speed = 5.0;
  Agent a;
  a.position = Vec2(8, 1);
  scene.agents = {a, a};
  const auto params = ModelParams::init(toy_mcfg(), toy_fcfg(), 0);
  const auto tokens = encode_scene(params, scene, nullptr);
  CHECK(tokens.agent_tokens == 2);
  CHECK(tokens.features.cols() == 2 + 11); // samples at 0,2,...,20
  CHECK(tokens.ego_feature.size() == 32);
}

TEST_CASE("encode_scene is deterministic and translation-covariant") {
  const auto params = ModelParams::init(toy_mcfg(), toy_fcfg(), 1);
  auto world = scene_at(generate(ScenarioKind::kLeadVehicleCruise, 3), 0.0);

  const auto t1 = encode_scene(params, to_ego_frame(world), nullptr);
  const auto t2 = encode_scene(params, to_ego_frame(world), nullptr);
  CHECK(t1.features == t2.features);
  CHECK(t1.ego_feature == t2.ego_feature);

  // Translating the whole world before the ego-frame transform is a no-op.
  Scene shifted = world;
  const Vec2 offset(123.4, -56.7);
  shifted.ego.position += offset;
  for (auto& agent : shifted.agents) agent.position += offset;
  for (int i = 0; i < shifted.corridor.centerline.cols(); ++i)
    shifted.corridor.centerline.col(i) += offset;
  const auto t3 = encode_scene(params, to_ego_frame(shifted), nullptr);
  CHECK((t3.features - t1.features).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((t3.positions - t1.positions).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("embed_anchors maps identical anchors to identical embeddings") {
  auto vocab = toy_vocab(2, 4, 3);
  vocab.paths.anchors.push_back(vocab.paths.anchors[1]); // duplicate anchor
  const auto params = ModelParams::init(toy_mcfg(), toy_fcfg(), 5);
  const auto emb = embed_anchors(params, vocab, nullptr);
  CHECK((emb.path.col(1) - emb.path.col(4)).cwiseAbs().maxCoeff() == 0.0);

  // Zero weights collapse every embedding onto the output bias.
  ModelParams zeroed = params;
  zeroed.path_enc.w1.setZero();
  zeroed.path_enc.w2.setZero();
  zeroed.path_enc.b2.setConstant(0.25);
  const auto emb0 = embed_anchors(zeroed, vocab, nullptr);
  for (int i = 0; i < emb0.path.cols(); ++i)
    CHECK(emb0.path.col(i).isApproxToConstant(0.25, 1e-15));

  // Cached forward equals recomputation bit-exactly.
  AnchorEmbedCache cache;
  const auto emb1 = embed_anchors(params, vocab, &cache);
  const auto emb2 = embed_anchors(params, vocab, nullptr);
  CHECK(emb1.path == emb2.path);
  CHECK(emb1.vel == emb2.vel);
}

TEST_CASE("attention_mix reduces to the projected value for a single token") {
  const int d = 8;
  AttnParams p;
  TestRng rng(9);
  auto fill = [&](MatX& m, int r, int c) {
    m.resize(r, c);
    for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0, 0.3);
  };
  fill(p.wq, d, d); fill(p.wk, d, d); fill(p.wv, d, d); fill(p.wo, d, d);
  fill(p.f1, 2 * d, d); fill(p.f2, d, 2 * d);
  p.bq = VecX::Zero(d); p.bk = VecX::Zero(d);
  p.bv = VecX::Random(d); p.bo = VecX::Random(d);
  p.fb1 = VecX::Zero(2 * d); p.fb2 = VecX::Zero(d);

  MatX queries = MatX::Random(d, 3);
  MatX token = MatX::Random(d, 1);
  const MatX mixed = attention_mix(p, queries, token, 2, nullptr);
  const VecX expected = p.wo * ((p.wv * token).colwise() + p.bv).col(0) + p.bo;
  for (int c = 0; c < 3; ++c) CHECK((mixed.col(c) - expected).cwiseAbs().maxCoeff() <= 1e-12);

  // Identical keys average the values.
  p.wk.setZero();
  MatX tokens = MatX::Random(d, 5);
  const MatX avg_mix = attention_mix(p, queries, tokens, 2, nullptr);
  const VecX vmean = ((p.wv * tokens).colwise() + p.bv).rowwise().mean();
  const VecX expected_avg = p.wo * vmean + p.bo;
  for (int c = 0; c < 3; ++c) CHECK((avg_mix.col(c) - expected_avg).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("dfa_forward honors exact and far-token weighting") {
  const int d = 4;
  DfaParams p;
  p.proj = MatX::Identity(d, d);
  p.bias = VecX::Zero(d);

  Mat2X token_pos(2, 2);
  token_pos << 5.0, 100.0,
               0.0, 0.0;
  MatX token_feat(d, 2);
  token_feat.col(0) << 1, 2, 3, 4;
  token_feat.col(1) << -9, -9, -9, -9;

  MatX emb = MatX::Zero(d, 1);
  std::vector<Mat2X> pts(1);
  pts[0].resize(2, 1);
  pts[0].col(0) = Vec2(5.0, 0.0); // exactly on token 0, 95 m from token 1

  const MatX out = dfa_forward(p, emb, pts, token_pos, token_feat, 3.0, nullptr);
  CHECK((out.col(0) - token_feat.col(0)).cwiseAbs().maxCoeff() <= 1e-6);

  // Fully masked anchor aggregates nothing.
  std::vector<Mat2X> empty_pts(1);
  empty_pts[0].resize(2, 0);
  const MatX out_empty = dfa_forward(p, emb, empty_pts, token_pos, token_feat, 3.0, nullptr);
  CHECK(out_empty.col(0).isZero(0.0));
}

TEST_CASE("soft_targets closed forms") {
  VecX equal = VecX::Constant(3, 4.2);
  CHECK(soft_targets(equal, 2.0).isApproxToConstant(1.0 / 3.0, 1e-12));

  VecX d(4);
  d << 0.1, 5.0, 2.0, 7.0;
  CHECK(soft_targets(d, 0.0).isApproxToConstant(0.25, 1e-12));

  VecX two(2);
  two << 0.0, std::log(2.0);
  const VecX q = soft_targets(two, 1.0);
  CHECK(q[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(q.sum() == doctest::Approx(1.0).epsilon(1e-9));

  // Invariance to constant shifts.
  const VecX q_shift = soft_targets(VecX(two.array() + 13.7), 1.0);
  CHECK((q_shift - q).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("cross-entropy and bce closed forms") {
  VecX target(3);
  target << 0.2, 0.5, 0.3;
  // Scores realizing exactly that distribution: log target
  const VecX scores = target.array().log();
  double entropy = 0.0;
  for (int i = 0; i < 3; ++i) entropy -= target[i] * std::log(target[i]);
  CHECK(cross_entropy(scores, target) == doctest::Approx(entropy).epsilon(1e-12));

  CHECK(bce_with_logit(0.0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce_with_logit(0.0, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("coarse scores behave like linear heads") {
  const auto vocab = toy_vocab(3, 4, 2);
  auto params = ModelParams::init(toy_mcfg(), toy_fcfg(), 11);
  const auto scene = toy_scene(4);

  SUBCASE("zero-weight head collapses to the bias") {
    params.head_path.w.setZero();
    params.head_path.b = -1.5;
    const auto coarse = coarse_forward(params, scene, vocab);
    CHECK(coarse.path_scores.isApproxToConstant(-1.5, 1e-12));
  }
  SUBCASE("bias shifts preserve the ordering") {
    const auto base = coarse_forward(params, scene, vocab);
    params.head_path.b += 3.25;
    const auto shifted = coarse_forward(params, scene, vocab);
    CHECK((shifted.path_scores - base.path_scores).isApproxToConstant(3.25, 1e-9));
  }
  SUBCASE("scores match the manual dot-product oracle") {
    const auto coarse = coarse_forward(params, scene, vocab);
    for (int i = 0; i < vocab.num_paths(); ++i) {
      const double manual = params.head_path.w.dot(coarse.ctx.path.col(i)) + params.head_path.b;
      CHECK(coarse.path_scores[i] == doctest::Approx(manual).epsilon(1e-12));
    }
  }
  SUBCASE("path scores ignore velocity anchor permutations") {
    const auto base = coarse_forward(params, scene, vocab);
    auto permuted = vocab;
    std::swap(permuted.velocities.anchors[0], permuted.velocities.anchors[1]);
    const auto after = coarse_forward(params, scene, permuted);
    CHECK(base.path_scores == after.path_scores);
  }
}

TEST_CASE("fuse_recondition is additive and permutation-consistent") {
  auto vocab = toy_vocab(5, 4, 2);
  const auto params = ModelParams::init(toy_mcfg(), toy_fcfg(), 13);
  const auto scene = toy_scene(6);
  const auto coarse = coarse_forward(params, scene, vocab);

  // e_tau is the elementwise sum of the selected contextual embeddings.
  const auto fine = fine_forward(params, coarse, vocab, {{2, 1}});
  CHECK((fine.e_tau.col(0) - (coarse.ctx.path.col(2) + coarse.ctx.vel.col(1)))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  // Duplicate velocity anchors are interchangeable.
  auto dup = vocab;
  dup.velocities.anchors.push_back(dup.velocities.anchors[0]);
  const auto coarse_dup = coarse_forward(params, scene, dup);
  const auto fine_a = fine_forward(params, coarse_dup, dup, {{1, 0}});
  const auto fine_b = fine_forward(params, coarse_dup, dup, {{1, 2}});
  CHECK((fine_a.traj_logits - fine_b.traj_logits).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((fine_a.metric_logits - fine_b.metric_logits).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("loss_forward satisfies the breakdown identity and CE minimum") {
  auto probe = make_probe(17, false);
  probe.weights.alpha = 0.7;
  ModelParams p = probe.shape;
  const auto coarse = coarse_forward(p, probe.scene, probe.vocab);
  const auto fine = fine_forward(p, coarse, probe.vocab, all_candidates(probe.vocab));
  const VecX d_tau = trajectory_target_distances(fine.composed, probe.gt_traj);
  const auto loss = loss_forward(
      coarse.path_scores, coarse.vel_scores, fine.traj_logits, fine.metric_logits,
      path_target_distances(probe.vocab.paths, probe.gt_path),
      velocity_target_distances(probe.vocab.velocities, probe.gt_vel), d_tau, probe.labels,
      probe.weights, nullptr, nullptr, nullptr, nullptr);
  CHECK(loss.total ==
        doctest::Approx(loss.path + loss.vel + loss.traj + 0.7 * loss.metric).epsilon(1e-12));
  CHECK(loss.path >= 0.0);
  CHECK(loss.metric >= 0.0);

  // CE attains the target entropy when the predictions match the targets.
  const VecX q = soft_targets(path_target_distances(probe.vocab.paths, probe.gt_path), 1.0);
  double entropy = 0.0;
  for (int i = 0; i < q.size(); ++i) entropy -= q[i] * std::log(std::max(q[i], 1e-300));
  CHECK(cross_entropy(q.array().log().matrix(), q) == doctest::Approx(entropy).epsilon(1e-9));
}

TEST_CASE("finite differences validate every block through the total loss") {
  for (const bool path_attention : {false, true}) {
    CAPTURE(path_attention);
    auto probe = make_probe(path_attention ? 23 : 29, path_attention);
    VecX flat = probe.shape.flatten();
    const VecX analytic = probe.analytic_grad(flat);
    REQUIRE(analytic.size() == flat.size());
    REQUIRE(analytic.norm() > 1e-3); // the probe must exercise the graph

    // Deterministic subsample covering the whole vector range.
    const long n = flat.size();
    const long samples = 160;
    int fails = 0;
    for (long s = 0; s < samples; ++s) {
      const long idx = (s * n) / samples;
      const double fd = test::fd_gradient(probe, flat, idx);
      if (!test::grad_close(analytic[idx], fd)) {
        ++fails;
        CAPTURE(idx);
        CAPTURE(analytic[idx]);
        CAPTURE(fd);
        CHECK(test::grad_close(analytic[idx], fd));
      }
    }
    REQUIRE(fails == 0);
  }
}

TEST_CASE("finite differences validate isolated blocks") {
  TestRng rng(31);
  const int d = 8;

  SUBCASE("mlp2") {
    Mlp2 m;
    m.w1 = MatX::Random(d, 5);
    m.b1 = VecX::Random(d);
    m.w2 = MatX::Random(3, d);
    m.b2 = VecX::Random(3);
    const MatX x = MatX::Random(5, 4);
    const MatX r = MatX::Random(3, 4); // fixed projection making a scalar loss

    auto pack = [&]() {
      VecX v(m.w1.size() + m.b1.size() + m.w2.size() + m.b2.size());
      long at = 0;
      for (auto* t : {&m.w1, &m.w2}) {}
      v << Eigen::Map<VecX>(m.w1.data(), m.w1.size()), m.b1,
          Eigen::Map<VecX>(m.w2.data(), m.w2.size()), m.b2;
      return v;
    };
    auto unpack = [&](const VecX& v) {
      long at = 0;
      Eigen::Map<VecX>(m.w1.data(), m.w1.size()) = v.segment(at, m.w1.size()); at += m.w1.size();
      m.b1 = v.segment(at, m.b1.size()); at += m.b1.size();
      Eigen::Map<VecX>(m.w2.data(), m.w2.size()) = v.segment(at, m.w2.size()); at += m.w2.size();
      m.b2 = v.segment(at, m.b2.size());
    };
    auto f = [&](const VecX& v) {
      unpack(v);
      return (mlp2_forward(m, x, nullptr).array() * r.array()).sum();
    };

    VecX v0 = pack();
    Mlp2Cache cache;
    mlp2_forward(m, x, &cache);
    Mlp2 grad;
    grad.w1 = MatX::Zero(d, 5); grad.b1 = VecX::Zero(d);
    grad.w2 = MatX::Zero(3, d); grad.b2 = VecX::Zero(3);
    mlp2_backward(m, cache, r, grad);
    VecX g(v0.size());
    g << Eigen::Map<VecX>(grad.w1.data(), grad.w1.size()), grad.b1,
        Eigen::Map<VecX>(grad.w2.data(), grad.w2.size()), grad.b2;

    for (long idx = 0; idx < v0.size(); ++idx) {
      const double fd = test::fd_gradient(f, v0, idx);
      REQUIRE(test::grad_close(g[idx], fd));
    }
    unpack(v0);

    // Input gradient too.
    MatX xc = x;
    auto fx = [&](const VecX& v) {
      Eigen::Map<const MatX> xm(v.data(), 5, 4);
      return (mlp2_forward(m, xm, nullptr).array() * r.array()).sum();
    };
    VecX xv = Eigen::Map<const VecX>(xc.data(), xc.size());
    Mlp2Cache c2;
    mlp2_forward(m, xc, &c2);
    Mlp2 g2 = grad;
    g2.w1.setZero(); g2.b1.setZero(); g2.w2.setZero(); g2.b2.setZero();
    const MatX dx = mlp2_backward(m, c2, r, g2);
    for (long idx = 0; idx < xv.size(); ++idx) {
      const double fd = test::fd_gradient(fx, xv, idx);
      REQUIRE(test::grad_close(dx.data()[idx], fd));
    }
  }

  SUBCASE("cross_attend inputs") {
    AttnParams p;
    auto fill = [&](MatX& mat, int r, int c, double s) {
      mat.resize(r, c);
      for (long i = 0; i < mat.size(); ++i) mat.data()[i] = rng.normal(0, s);
    };
    fill(p.wq, d, d, 0.3); fill(p.wk, d, d, 0.3); fill(p.wv, d, d, 0.3); fill(p.wo, d, d, 0.3);
    fill(p.f1, 2 * d, d, 0.3); fill(p.f2, d, 2 * d, 0.3);
    p.bq = VecX::Random(d); p.bk = VecX::Random(d); p.bv = VecX::Random(d); p.bo = VecX::Random(d);
    p.fb1 = VecX::Random(2 * d); p.fb2 = VecX::Random(d);

    MatX queries = MatX::Random(d, 3);
    MatX tokens = MatX::Random(d, 5);
    MatX r = MatX::Random(d, 3);

    auto f_q = [&](const VecX& v) {
      Eigen::Map<const MatX> qm(v.data(), d, 3);
      return (cross_attend_forward(p, qm, tokens, 2, nullptr).array() * r.array()).sum();
    };
    AttnCache cache;
    cross_attend_forward(p, queries, tokens, 2, &cache);
    AttnParams grad = p;
    for (auto* t : {&grad.wq, &grad.wk, &grad.wv, &grad.wo, &grad.f1, &grad.f2}) t->setZero();
    for (auto* t : {&grad.bq, &grad.bk, &grad.bv, &grad.bo, &grad.fb1, &grad.fb2}) t->setZero();
    MatX dq = MatX::Zero(d, 3), dtok = MatX::Zero(d, 5);
    cross_attend_backward(p, cache, 2, r, grad, dq, dtok);

    VecX qv = Eigen::Map<const VecX>(queries.data(), queries.size());
    for (long idx = 0; idx < qv.size(); idx += 3) {
      const double fd = test::fd_gradient(f_q, qv, idx);
      REQUIRE(test::grad_close(dq.data()[idx], fd));
    }
    auto f_t = [&](const VecX& v) {
      Eigen::Map<const MatX> tm(v.data(), d, 5);
      return (cross_attend_forward(p, queries, tm, 2, nullptr).array() * r.array()).sum();
    };
    VecX tv = Eigen::Map<const VecX>(tokens.data(), tokens.size());
    for (long idx = 0; idx < tv.size(); idx += 3) {
      const double fd = test::fd_gradient(f_t, tv, idx);
      REQUIRE(test::grad_close(dtok.data()[idx], fd));
    }
  }
}
