#include "fplan/scorer.hpp"

#include <cmath>
#include <stdexcept>

namespace fplan {

namespace {

void require_ego_frame(const Scene& scene) {
  if (scene.ego.position.norm() > 1e-6 || std::abs(scene.ego.heading) > 1e-6)
    throw std::invalid_argument("scorer: scene must be expressed in the ego frame");
}

std::vector<Mat2X> anchor_sample_points(const PathVocabulary& vocab) {
  std::vector<Mat2X> out;
  out.reserve(vocab.anchors.size());
  for (const auto& anchor : vocab.anchors) {
    const int n_valid = anchor.valid_count();
    out.push_back(anchor.points.leftCols(n_valid));
  }
  return out;
}

}  // namespace

SceneTokens encode_scene(const ModelParams& p, const Scene& scene, SceneEncodeCache* cache) {
  require_ego_frame(scene);
  const auto& corridor = scene.corridor;

  const int n_agents = static_cast<int>(scene.agents.size());
  MatX agent_in(7, n_agents);
  Mat2X agent_pos(2, n_agents);
  for (int a = 0; a < n_agents; ++a) {
    const auto& agent = scene.agents[a];
    agent_in.col(a) << agent.position.x(), agent.position.y(), std::cos(agent.heading),
        std::sin(agent.heading), agent.speed, agent.length, agent.width;
    agent_pos.col(a) = agent.position;
  }

  // Map tokens along the centerline window around the ego projection.
  const double s_ego = corridor.project(Vec2::Zero()).s;
  const double s_begin = std::max(0.0, s_ego - p.cfg.map_window_back);
  const double s_end = std::min(corridor.length(), s_ego + p.cfg.map_window_ahead);
  const int n_map = std::max(1, static_cast<int>((s_end - s_begin) / p.cfg.map_token_spacing) + 1);
  MatX map_in(4, n_map);
  Mat2X map_pos(2, n_map);
  for (int k = 0; k < n_map; ++k) {
    const double s = std::min(s_begin + k * p.cfg.map_token_spacing, s_end);
    const Vec2 pos = corridor.point_at(s);
    const Vec2 tangent = corridor.tangent_at(s);
    map_in.col(k) << pos.x(), pos.y(), tangent.x(), tangent.y();
    map_pos.col(k) = pos;
  }

  // Ego status: speed plus the clamped distance to the nearest agent, so
  // risk heads can condition on obstacle proximity directly instead of
  // inferring it from diluted token mixes. The distance is scaled to the
  // same order as speed.
  double nearest_agent = 60.0;
  for (const auto& agent : scene.agents)
    nearest_agent = std::min(nearest_agent, agent.position.norm());
  MatX ego_in(2, 1);
  ego_in(0, 0) = scene.ego.speed;
  ego_in(1, 0) = 0.1 * nearest_agent;

  SceneEncodeCache local;
  SceneEncodeCache* c = cache ? cache : &local;
  c->agent_in = agent_in;
  c->map_in = map_in;
  c->ego_in = ego_in;

  SceneTokens tokens;
  tokens.agent_tokens = n_agents;
  tokens.positions.resize(2, n_agents + n_map);
  tokens.features.resize(p.cfg.dim, n_agents + n_map);
  if (n_agents > 0) {
    tokens.positions.leftCols(n_agents) = agent_pos;
    tokens.features.leftCols(n_agents) = mlp2_forward(p.agent_enc, agent_in, &c->agent);
  }
  tokens.positions.rightCols(n_map) = map_pos;
  tokens.features.rightCols(n_map) = mlp2_forward(p.map_enc, map_in, &c->map);
  tokens.ego_feature = mlp2_forward(p.ego_enc, ego_in, &c->ego).col(0);
  return tokens;
}

void encode_scene_backward(const ModelParams& p, const SceneEncodeCache& cache,
                           const MatX& dfeatures, const VecX& dego, ModelParams& grad) {
  const int n_agents = static_cast<int>(cache.agent_in.cols());
  const int n_map = static_cast<int>(cache.map_in.cols());
  if (n_agents > 0) mlp2_backward(p.agent_enc, cache.agent, dfeatures.leftCols(n_agents), grad.agent_enc);
  mlp2_backward(p.map_enc, cache.map, dfeatures.rightCols(n_map), grad.map_enc);
  mlp2_backward(p.ego_enc, cache.ego, dego, grad.ego_enc);
}

AnchorEmbeddings embed_anchors(const ModelParams& p, const TrajectoryVocabulary& vocab,
                               AnchorEmbedCache* cache) {
  const int path_len = p.path_points;
  const int t_steps = p.horizon_steps;
  if (vocab.paths.cfg.path_size() != path_len || vocab.velocities.cfg.horizon_steps != t_steps)
    throw std::invalid_argument("embed_anchors: vocabulary shape does not match the model");

  MatX path_in(3 * path_len, vocab.num_paths());
  for (int i = 0; i < vocab.num_paths(); ++i) {
    const auto& anchor = vocab.paths.anchors[i];
    for (int k = 0; k < path_len; ++k) {
      path_in(3 * k, i) = anchor.points(0, k);
      path_in(3 * k + 1, i) = anchor.points(1, k);
      path_in(3 * k + 2, i) = anchor.valid[k] ? 1.0 : 0.0;
    }
  }
  MatX vel_in(t_steps, vocab.num_velocities());
  for (int j = 0; j < vocab.num_velocities(); ++j) vel_in.col(j) = vocab.velocities.anchors[j].speeds;

  AnchorEmbedCache local;
  AnchorEmbedCache* c = cache ? cache : &local;
  c->path_in = path_in;
  c->vel_in = vel_in;

  AnchorEmbeddings emb;
  emb.path = mlp2_forward(p.path_enc, path_in, &c->path);
  emb.vel = mlp2_forward(p.vel_enc, vel_in, &c->vel);
  return emb;
}

void embed_anchors_backward(const ModelParams& p, const AnchorEmbedCache& cache,
                            const MatX& dpath_emb, const MatX& dvel_emb, ModelParams& grad) {
  mlp2_backward(p.path_enc, cache.path, dpath_emb, grad.path_enc);
  mlp2_backward(p.vel_enc, cache.vel, dvel_emb, grad.vel_enc);
}

ContextEmbeddings contextualize(const ModelParams& p, const AnchorEmbeddings& emb,
                                const SceneTokens& tokens, const TrajectoryVocabulary& vocab,
                                ContextCache* cache) {
  ContextCache local;
  ContextCache* c = cache ? cache : &local;
  c->q_path = emb.path.colwise() + tokens.ego_feature;
  c->q_vel = emb.vel.colwise() + tokens.ego_feature;

  ContextEmbeddings ctx;
  if (p.cfg.path_cross_attention) {
    ctx.path = cross_attend_forward(p.attn_p, c->q_path, tokens.features, p.cfg.heads, &c->attn_p);
  } else {
    ctx.path = dfa_forward(p.dfa_p, c->q_path, anchor_sample_points(vocab.paths), tokens.positions,
                           tokens.features, p.cfg.dfa_sigma, &c->dfa_p);
  }
  ctx.vel = cross_attend_forward(p.attn_v, c->q_vel, tokens.features, p.cfg.heads, &c->attn_v);
  return ctx;
}

void contextualize_backward(const ModelParams& p, const ContextCache& cache,
                            const MatX& dctx_path, const MatX& dctx_vel, ModelParams& grad,
                            MatX& dpath_emb, MatX& dvel_emb, MatX& dtoken_feat, VecX& dego) {
  MatX dq_path = MatX::Zero(cache.q_path.rows(), cache.q_path.cols());
  MatX dq_vel = MatX::Zero(cache.q_vel.rows(), cache.q_vel.cols());
  if (p.cfg.path_cross_attention) {
    cross_attend_backward(p.attn_p, cache.attn_p, p.cfg.heads, dctx_path, grad.attn_p, dq_path,
                          dtoken_feat);
  } else {
    dfa_backward(p.dfa_p, cache.dfa_p, dctx_path, grad.dfa_p, dq_path, dtoken_feat);
  }
  cross_attend_backward(p.attn_v, cache.attn_v, p.cfg.heads, dctx_vel, grad.attn_v, dq_vel,
                        dtoken_feat);
  dpath_emb += dq_path;
  dvel_emb += dq_vel;
  dego += dq_path.rowwise().sum() + dq_vel.rowwise().sum();
}

CoarseForward coarse_forward(const ModelParams& p, const Scene& ego_scene,
                             const TrajectoryVocabulary& vocab) {
  CoarseForward fwd;
  fwd.tokens = encode_scene(p, ego_scene, &fwd.scene_cache);
  fwd.emb = embed_anchors(p, vocab, &fwd.anchor_cache);
  fwd.ctx = contextualize(p, fwd.emb, fwd.tokens, vocab, &fwd.ctx_cache);
  fwd.path_scores = head_forward(p.head_path, fwd.ctx.path);
  fwd.vel_scores = head_forward(p.head_vel, fwd.ctx.vel);
  return fwd;
}

FineForward fine_forward(const ModelParams& p, const CoarseForward& coarse,
                         const TrajectoryVocabulary& vocab,
                         const std::vector<CandidateIdx>& cands) {
  const int k_cands = static_cast<int>(cands.size());
  FineForward fine;
  fine.cands = cands;
  fine.composed.reserve(k_cands);
  fine.e_tau.resize(p.cfg.dim, k_cands);
  std::vector<Mat2X> waypoints(k_cands);
  for (int c = 0; c < k_cands; ++c) {
    fine.e_tau.col(c) = coarse.ctx.path.col(cands[c].i) + coarse.ctx.vel.col(cands[c].j);
    fine.composed.push_back(entry(vocab, cands[c].i, cands[c].j));
    waypoints[c] = fine.composed.back().waypoints;
  }
  fine.ctx_tau = dfa_forward(p.dfa_tau, fine.e_tau, waypoints, coarse.tokens.positions,
                             coarse.tokens.features, p.cfg.dfa_sigma, &fine.dfa_cache);
  fine.traj_logits = head_forward(p.head_traj, fine.ctx_tau);
  fine.metric_logits.resize(kNumMetricHeads, k_cands);
  for (int m = 0; m < kNumMetricHeads; ++m)
    fine.metric_logits.row(m) = head_forward(p.head_metric[m], fine.ctx_tau).transpose();
  return fine;
}

void scorer_backward(const ModelParams& p, const CoarseForward& coarse, const FineForward& fine,
                     const VecX& dpath_scores, const VecX& dvel_scores, const VecX& dtraj_logits,
                     const MatX& dmetric_logits, ModelParams& grad) {
  const int d = p.cfg.dim;
  MatX dctx_path = MatX::Zero(d, coarse.ctx.path.cols());
  MatX dctx_vel = MatX::Zero(d, coarse.ctx.vel.cols());
  MatX dtoken_feat = MatX::Zero(d, coarse.tokens.features.cols());

  if (!fine.cands.empty()) {
    MatX dctx_tau = MatX::Zero(d, static_cast<int>(fine.cands.size()));
    if (dtraj_logits.size() > 0)
      head_backward(p.head_traj, fine.ctx_tau, dtraj_logits, grad.head_traj, dctx_tau);
    if (dmetric_logits.size() > 0) {
      for (int m = 0; m < kNumMetricHeads; ++m)
        head_backward(p.head_metric[m], fine.ctx_tau, dmetric_logits.row(m).transpose(),
                      grad.head_metric[m], dctx_tau);
    }
    MatX de_tau = MatX::Zero(d, static_cast<int>(fine.cands.size()));
    dfa_backward(p.dfa_tau, fine.dfa_cache, dctx_tau, grad.dfa_tau, de_tau, dtoken_feat);
    for (size_t c = 0; c < fine.cands.size(); ++c) {
      dctx_path.col(fine.cands[c].i) += de_tau.col(static_cast<int>(c));
      dctx_vel.col(fine.cands[c].j) += de_tau.col(static_cast<int>(c));
    }
  }

  if (dpath_scores.size() > 0)
    head_backward(p.head_path, coarse.ctx.path, dpath_scores, grad.head_path, dctx_path);
  if (dvel_scores.size() > 0)
    head_backward(p.head_vel, coarse.ctx.vel, dvel_scores, grad.head_vel, dctx_vel);

  MatX dpath_emb = MatX::Zero(d, coarse.emb.path.cols());
  MatX dvel_emb = MatX::Zero(d, coarse.emb.vel.cols());
  VecX dego = VecX::Zero(d);
  contextualize_backward(p, coarse.ctx_cache, dctx_path, dctx_vel, grad, dpath_emb, dvel_emb,
                         dtoken_feat, dego);
  embed_anchors_backward(p, coarse.anchor_cache, dpath_emb, dvel_emb, grad);
  encode_scene_backward(p, coarse.scene_cache, dtoken_feat, dego, grad);
}

VecX path_target_distances(const PathVocabulary& vocab, const GeometricPath& gt) {
  const int n_valid = gt.valid_count();
  VecX out(vocab.size());
  for (int i = 0; i < vocab.size(); ++i) {
    const auto& anchor = vocab.anchors[i];
    double acc = 0.0;
    for (int k = 0; k < n_valid; ++k)
      acc += (anchor.points.col(k) - gt.points.col(k)).squaredNorm();
    out[i] = n_valid > 0 ? acc / n_valid : 0.0;
  }
  return out;
}

VecX velocity_target_distances(const VelocityVocabulary& vocab, const VelocityProfile& gt) {
  VecX out(vocab.size());
  for (int j = 0; j < vocab.size(); ++j)
    out[j] = (vocab.anchors[j].speeds - gt.speeds).cwiseAbs().sum();
  return out;
}

VecX trajectory_target_distances(const std::vector<Trajectory>& composed, const Trajectory& gt) {
  VecX out(static_cast<int>(composed.size()));
  for (size_t c = 0; c < composed.size(); ++c)
    out[static_cast<int>(c)] = (composed[c].waypoints - gt.waypoints).colwise().squaredNorm().sum();
  return out;
}

LossBreakdown loss_forward(const VecX& path_scores, const VecX& vel_scores,
                           const VecX& traj_logits, const MatX& metric_logits,
                           const VecX& path_dist, const VecX& vel_dist, const VecX& traj_dist,
                           const MatX& metric_labels, const LossWeights& w, VecX* dpath_scores,
                           VecX* dvel_scores, VecX* dtraj_logits, MatX* dmetric_logits) {
  if (metric_logits.rows() != kNumMetricHeads || metric_labels.rows() != kNumMetricHeads)
    throw std::invalid_argument("loss_forward: metric rows must match the head count");
  if (path_scores.size() != path_dist.size() || vel_scores.size() != vel_dist.size() ||
      traj_logits.size() != traj_dist.size() || metric_logits.cols() != traj_logits.size() ||
      metric_labels.cols() != traj_logits.size())
    throw std::invalid_argument("loss_forward: shape mismatch");

  LossBreakdown loss;
  const VecX q_path = soft_targets(path_dist, w.lambda_path);
  const VecX q_vel = soft_targets(vel_dist, w.lambda_vel);
  const VecX q_traj = soft_targets(traj_dist, w.lambda_traj);

  loss.path = cross_entropy(path_scores, q_path);
  loss.vel = cross_entropy(vel_scores, q_vel);
  loss.traj = cross_entropy(traj_logits, q_traj);

  const int k_cands = static_cast<int>(traj_logits.size());
  const double eps = std::clamp(w.metric_label_smoothing, 0.0, 0.49);
  auto smooth = [eps](double y) { return y * (1.0 - 2.0 * eps) + eps; };
  double metric_acc = 0.0;
  for (int c = 0; c < k_cands; ++c)
    for (int m = 0; m < kNumMetricHeads; ++m)
      metric_acc += bce_with_logit(metric_logits(m, c), smooth(metric_labels(m, c)));
  loss.metric = metric_acc / (k_cands * kNumMetricHeads);
  loss.total = loss.path + loss.vel + loss.traj + w.alpha * loss.metric;

  if (dpath_scores) *dpath_scores = cross_entropy_backward(path_scores, q_path);
  if (dvel_scores) *dvel_scores = cross_entropy_backward(vel_scores, q_vel);
  if (dtraj_logits) *dtraj_logits = cross_entropy_backward(traj_logits, q_traj);
  if (dmetric_logits) {
    dmetric_logits->resize(kNumMetricHeads, k_cands);
    const double scale = w.alpha / (k_cands * kNumMetricHeads);
    for (int c = 0; c < k_cands; ++c)
      for (int m = 0; m < kNumMetricHeads; ++m)
        (*dmetric_logits)(m, c) =
            scale * bce_with_logit_backward(metric_logits(m, c), smooth(metric_labels(m, c)));
  }
  return loss;
}

}  // namespace fplan
