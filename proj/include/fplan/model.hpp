#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fplan/scene.hpp"
#include "fplan/trajectory.hpp"
#include "fplan/types.hpp"
#include "fplan/vocabulary.hpp"

namespace fplan {

// Architecture knobs. The path-scene interaction defaults to deformable
// aggregation; cross-attention is the configurable alternative. The
// velocity-scene interaction is always cross-attention (velocity profiles
// carry no spatial geometry to sample along).
struct ModelConfig {
  int dim = 32;
  int heads = 2;
  double dfa_sigma = 3.0;         // RBF radius for deformable aggregation [m]
  double map_token_spacing = 2.0; // centerline sampling interval [m]
  double map_window_back = 10.0;
  double map_window_ahead = 50.0;
  bool path_cross_attention = false;
};

struct Mlp2 { // Linear-ReLU-Linear, columns are items
  MatX w1, w2;
  VecX b1, b2;
};

struct AttnParams { // multi-head cross-attention + feed-forward, both residual
  MatX wq, wk, wv, wo;
  VecX bq, bk, bv, bo;
  MatX f1, f2;
  VecX fb1, fb2;
};

struct DfaParams { // projection applied to the aggregated scene feature
  MatX proj;
  VecX bias;
};

struct HeadParams { // linear d -> 1
  VecX w;
  double b = 0.0;
};

// Metric-head order; ddc/tl/ec have no heads (fixed 1.0 placeholders).
enum MetricIndex { kMetricNc = 0, kMetricDac, kMetricTtc, kMetricComfort, kMetricEp, kMetricLk };
constexpr int kNumMetricHeads = 6;

struct ModelParams {
  ModelConfig cfg;
  int path_points = 0;  // S, fixes the path encoder input width (3S)
  int horizon_steps = 0; // T, fixes the velocity encoder input width

  Mlp2 agent_enc; // 7 -> d -> d
  Mlp2 map_enc;   // 4 -> d -> d
  Mlp2 ego_enc;   // 2 -> d -> d
  Mlp2 path_enc;  // 3S -> d -> d
  Mlp2 vel_enc;   // T -> d -> d
  AttnParams attn_p;
  AttnParams attn_v;
  DfaParams dfa_p;
  DfaParams dfa_tau;
  HeadParams head_path, head_vel, head_traj;
  std::array<HeadParams, kNumMetricHeads> head_metric;

  static ModelParams init(const ModelConfig& cfg, const FactorizationConfig& fcfg, uint64_t seed);
  static ModelParams init(const ModelConfig& cfg, int path_points, int horizon_steps,
                          uint64_t seed);
  ModelParams zeros_like() const;

  // Fixed-order flattening shared by the optimizer, the finite-difference
  // oracle, and the checkpoint format.
  long num_params() const;
  VecX flatten() const;
  void unflatten(const Eigen::Ref<const VecX>& flat);
  bool all_finite() const;
};

// --- building blocks (forward caches + hand-derived backward) ---

struct Mlp2Cache {
  MatX x, h_pre, h;
};
MatX mlp2_forward(const Mlp2& p, const MatX& x, Mlp2Cache* cache);
MatX mlp2_backward(const Mlp2& p, const Mlp2Cache& cache, const MatX& dy, Mlp2& grad);

struct AttnCache {
  MatX queries, tokens;
  MatX q, k, v;            // post-projection
  std::vector<MatX> attn;  // per head, n x m
  MatX mixed;              // concatenated head outputs, d x n
  MatX res1, ffn_pre, ffn_h;
};

// Pre-residual multi-head mixing only; exposed for unit checks.
MatX attention_mix(const AttnParams& p, const MatX& queries, const MatX& tokens, int heads,
                   AttnCache* cache);

// queries + MHA, then feed-forward, both with residual adds.
MatX cross_attend_forward(const AttnParams& p, const MatX& queries, const MatX& tokens, int heads,
                          AttnCache* cache);
void cross_attend_backward(const AttnParams& p, const AttnCache& cache, int heads, const MatX& dy,
                           AttnParams& grad, MatX& dqueries, MatX& dtokens);

struct DfaCache {
  MatX emb, mean_weight /* m x n */, agg /* d x n */;
};

// Per item: RBF-softmax token weights at each sample position, masked mean
// over positions, token-feature aggregation, projection, residual add.
MatX dfa_forward(const DfaParams& p, const MatX& emb, const std::vector<Mat2X>& sample_points,
                 const Mat2X& token_pos, const MatX& token_feat, double sigma, DfaCache* cache);
void dfa_backward(const DfaParams& p, const DfaCache& cache, const MatX& dy, DfaParams& grad,
                  MatX& demb, MatX& dtoken_feat);

VecX head_forward(const HeadParams& p, const MatX& x);
void head_backward(const HeadParams& p, const MatX& x, const VecX& dy, HeadParams& grad, MatX& dx);

// --- probabilistic helpers ---

// Softmax of -lambda * d with max subtraction.
VecX soft_targets(const Eigen::Ref<const VecX>& distances, double lambda);

double cross_entropy(const Eigen::Ref<const VecX>& scores, const Eigen::Ref<const VecX>& targets);
VecX cross_entropy_backward(const Eigen::Ref<const VecX>& scores,
                            const Eigen::Ref<const VecX>& targets);

double sigmoid(double x);
double bce_with_logit(double logit, double label);
double bce_with_logit_backward(double logit, double label);

}  // namespace fplan
