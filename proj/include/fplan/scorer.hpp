#pragma once

#include <vector>

#include "fplan/model.hpp"
#include "fplan/scene.hpp"
#include "fplan/vocabulary.hpp"

namespace fplan {

// Vector-world tokenization: one token per agent, map tokens sampled along
// the corridor centerline, and an ego status feature from speed.
struct SceneTokens {
  Mat2X positions; // 2 x m
  MatX features;   // d x m
  VecX ego_feature;
  int agent_tokens = 0;
};

struct SceneEncodeCache {
  MatX agent_in, map_in, ego_in;
  Mlp2Cache agent, map, ego;
};

SceneTokens encode_scene(const ModelParams& p, const Scene& scene, SceneEncodeCache* cache);
void encode_scene_backward(const ModelParams& p, const SceneEncodeCache& cache,
                           const MatX& dfeatures, const VecX& dego, ModelParams& grad);

struct AnchorEmbeddings {
  MatX path; // d x N_p
  MatX vel;  // d x N_v
};

struct AnchorEmbedCache {
  MatX path_in, vel_in;
  Mlp2Cache path, vel;
};

// e^p_i = E_p(flatten(p_i, mask)), e^v_j = E_v(v_j); anchors are static so
// these depend only on the parameters.
AnchorEmbeddings embed_anchors(const ModelParams& p, const TrajectoryVocabulary& vocab,
                               AnchorEmbedCache* cache);
void embed_anchors_backward(const ModelParams& p, const AnchorEmbedCache& cache,
                            const MatX& dpath_emb, const MatX& dvel_emb, ModelParams& grad);

struct ContextCache {
  MatX q_path, q_vel; // embeddings + ego status
  AttnCache attn_p;
  DfaCache dfa_p;
  AttnCache attn_v;
};

struct ContextEmbeddings {
  MatX path; // d x N_p contextualized
  MatX vel;  // d x N_v
};

ContextEmbeddings contextualize(const ModelParams& p, const AnchorEmbeddings& emb,
                                const SceneTokens& tokens, const TrajectoryVocabulary& vocab,
                                ContextCache* cache);
void contextualize_backward(const ModelParams& p, const ContextCache& cache,
                            const MatX& dctx_path, const MatX& dctx_vel, ModelParams& grad,
                            MatX& dpath_emb, MatX& dvel_emb, MatX& dtoken_feat, VecX& dego);

// Everything scene-and-vocabulary-wide needed before pruning.
struct CoarseForward {
  SceneTokens tokens;
  AnchorEmbeddings emb;
  ContextEmbeddings ctx;
  VecX path_scores; // N_p
  VecX vel_scores;  // N_v
  SceneEncodeCache scene_cache;
  AnchorEmbedCache anchor_cache;
  ContextCache ctx_cache;
};

CoarseForward coarse_forward(const ModelParams& p, const Scene& ego_scene,
                             const TrajectoryVocabulary& vocab);

struct CandidateIdx {
  int i = 0, j = 0;
};

// Fused trajectory embeddings for composed candidates, re-conditioned on the
// scene, with imitation and metric heads.
struct FineForward {
  std::vector<CandidateIdx> cands;
  std::vector<Trajectory> composed;
  MatX e_tau;         // d x K fused embeddings
  MatX ctx_tau;       // d x K after re-conditioning
  VecX traj_logits;   // K
  MatX metric_logits; // 6 x K
  DfaCache dfa_cache;
};

FineForward fine_forward(const ModelParams& p, const CoarseForward& coarse,
                         const TrajectoryVocabulary& vocab,
                         const std::vector<CandidateIdx>& cands);

// Full reverse pass. dpath_scores / dvel_scores may be empty (inference-only
// stages); fine gradients are scattered back through the shared context.
void scorer_backward(const ModelParams& p, const CoarseForward& coarse, const FineForward& fine,
                     const VecX& dpath_scores, const VecX& dvel_scores, const VecX& dtraj_logits,
                     const MatX& dmetric_logits, ModelParams& grad);

// --- training targets and losses ---

struct LossWeights {
  double lambda_path = 1.0;
  double lambda_vel = 1.0;
  double lambda_traj = 1.0;
  double alpha = 1.0;
  // Shrinks metric labels toward 0.5, bounding head logits so the sigmoids
  // stay calibrated instead of saturating.
  double metric_label_smoothing = 0.0;
};

struct LossBreakdown {
  double path = 0.0, vel = 0.0, traj = 0.0, metric = 0.0, total = 0.0;
};

// Masked average squared point distance between the ground-truth path and
// each anchor, over the ground truth's valid points (anchor slots store their
// clamped end positions, so short anchors are penalized, not skipped).
VecX path_target_distances(const PathVocabulary& vocab, const GeometricPath& gt);

// L1 speed distance per velocity anchor.
VecX velocity_target_distances(const VelocityVocabulary& vocab, const VelocityProfile& gt);

// Squared L2 over time between each composed candidate and the ground truth.
VecX trajectory_target_distances(const std::vector<Trajectory>& composed, const Trajectory& gt);

// Soft-target cross-entropies plus metric BCE; emits d(total)/d(logits) with
// all weights folded in.
LossBreakdown loss_forward(const VecX& path_scores, const VecX& vel_scores,
                           const VecX& traj_logits, const MatX& metric_logits,
                           const VecX& path_dist, const VecX& vel_dist, const VecX& traj_dist,
                           const MatX& metric_labels, const LossWeights& w, VecX* dpath_scores,
                           VecX* dvel_scores, VecX* dtraj_logits, MatX* dmetric_logits);

}  // namespace fplan
