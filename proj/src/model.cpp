#include "fplan/model.hpp"

#include <cmath>
#include <stdexcept>

#include "fplan/random.hpp"

namespace fplan {

namespace {

void init_mlp2(Mlp2& m, int in, int hidden, int out, Rng& rng) {
  m.w1.resize(hidden, in);
  m.w2.resize(out, hidden);
  m.b1 = VecX::Zero(hidden);
  m.b2 = VecX::Zero(out);
  const double s1 = 1.0 / std::sqrt(in);
  const double s2 = 1.0 / std::sqrt(hidden);
  for (int r = 0; r < hidden; ++r)
    for (int c = 0; c < in; ++c) m.w1(r, c) = rng.normal(0.0, s1);
  for (int r = 0; r < out; ++r)
    for (int c = 0; c < hidden; ++c) m.w2(r, c) = rng.normal(0.0, s2);
}

void init_attn(AttnParams& a, int dim, Rng& rng) {
  const double s = 1.0 / std::sqrt(dim);
  auto fill = [&](MatX& m, int rows, int cols, double scale) {
    m.resize(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, scale);
  };
  fill(a.wq, dim, dim, s);
  fill(a.wk, dim, dim, s);
  fill(a.wv, dim, dim, s);
  fill(a.wo, dim, dim, s);
  a.bq = VecX::Zero(dim);
  a.bk = VecX::Zero(dim);
  a.bv = VecX::Zero(dim);
  a.bo = VecX::Zero(dim);
  fill(a.f1, 2 * dim, dim, s);
  fill(a.f2, dim, 2 * dim, 1.0 / std::sqrt(2.0 * dim));
  a.fb1 = VecX::Zero(2 * dim);
  a.fb2 = VecX::Zero(dim);
}

void init_head(HeadParams& h, int dim, Rng& rng) {
  h.w.resize(dim);
  const double s = 1.0 / std::sqrt(dim);
  for (int i = 0; i < dim; ++i) h.w[i] = rng.normal(0.0, s);
  h.b = 0.0;
}

template <typename Fn>
void for_each_tensor(ModelParams& p, Fn&& fn) {
  auto mlp = [&](Mlp2& m) { fn(m.w1); fn(m.b1); fn(m.w2); fn(m.b2); };
  auto attn = [&](AttnParams& a) {
    fn(a.wq); fn(a.bq); fn(a.wk); fn(a.bk); fn(a.wv); fn(a.bv); fn(a.wo); fn(a.bo);
    fn(a.f1); fn(a.fb1); fn(a.f2); fn(a.fb2);
  };
  mlp(p.agent_enc);
  mlp(p.map_enc);
  mlp(p.ego_enc);
  mlp(p.path_enc);
  mlp(p.vel_enc);
  attn(p.attn_p);
  attn(p.attn_v);
  fn(p.dfa_p.proj); fn(p.dfa_p.bias);
  fn(p.dfa_tau.proj); fn(p.dfa_tau.bias);
  fn(p.head_path.w); fn(p.head_path.b);
  fn(p.head_vel.w); fn(p.head_vel.b);
  fn(p.head_traj.w); fn(p.head_traj.b);
  for (auto& h : p.head_metric) { fn(h.w); fn(h.b); }
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, const FactorizationConfig& fcfg,
                              uint64_t seed) {
  return init(cfg, fcfg.path_size(), fcfg.horizon_steps, seed);
}

ModelParams ModelParams::init(const ModelConfig& cfg, int path_points, int horizon_steps,
                              uint64_t seed) {
  if (cfg.dim % cfg.heads != 0) throw std::invalid_argument("ModelParams: dim % heads != 0");
  Rng rng(seed);
  ModelParams p;
  p.cfg = cfg;
  p.path_points = path_points;
  p.horizon_steps = horizon_steps;
  const int d = cfg.dim;
  init_mlp2(p.agent_enc, 7, d, d, rng);
  init_mlp2(p.map_enc, 4, d, d, rng);
  init_mlp2(p.ego_enc, 2, d, d, rng);
  init_mlp2(p.path_enc, 3 * p.path_points, d, d, rng);
  init_mlp2(p.vel_enc, p.horizon_steps, d, d, rng);
  init_attn(p.attn_p, d, rng);
  init_attn(p.attn_v, d, rng);
  auto init_dfa = [&](DfaParams& dfa) {
    dfa.proj.resize(d, d);
    const double s = 1.0 / std::sqrt(d);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) dfa.proj(r, c) = rng.normal(0.0, s);
    dfa.bias = VecX::Zero(d);
  };
  init_dfa(p.dfa_p);
  init_dfa(p.dfa_tau);
  init_head(p.head_path, d, rng);
  init_head(p.head_vel, d, rng);
  init_head(p.head_traj, d, rng);
  for (auto& h : p.head_metric) init_head(h, d, rng);
  return p;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for_each_tensor(z, [](auto& t) {
    using T = std::decay_t<decltype(t)>;
    if constexpr (std::is_same_v<T, double>) t = 0.0;
    else t.setZero();
  });
  return z;
}

long ModelParams::num_params() const {
  long n = 0;
  for_each_tensor(const_cast<ModelParams&>(*this), [&](auto& t) {
    using T = std::decay_t<decltype(t)>;
    if constexpr (std::is_same_v<T, double>) n += 1;
    else n += t.size();
  });
  return n;
}

VecX ModelParams::flatten() const {
  VecX out(num_params());
  long at = 0;
  for_each_tensor(const_cast<ModelParams&>(*this), [&](auto& t) {
    using T = std::decay_t<decltype(t)>;
    if constexpr (std::is_same_v<T, double>) {
      out[at++] = t;
    } else {
      for (long i = 0; i < t.size(); ++i) out[at + i] = t.data()[i];
      at += t.size();
    }
  });
  return out;
}

void ModelParams::unflatten(const Eigen::Ref<const VecX>& flat) {
  if (flat.size() != num_params()) throw std::invalid_argument("unflatten: size mismatch");
  long at = 0;
  for_each_tensor(*this, [&](auto& t) {
    using T = std::decay_t<decltype(t)>;
    if constexpr (std::is_same_v<T, double>) {
      t = flat[at++];
    } else {
      for (long i = 0; i < t.size(); ++i) t.data()[i] = flat[at + i];
      at += t.size();
    }
  });
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each_tensor(const_cast<ModelParams&>(*this), [&](auto& t) {
    using T = std::decay_t<decltype(t)>;
    if constexpr (std::is_same_v<T, double>) ok = ok && std::isfinite(t);
    else ok = ok && t.allFinite();
  });
  return ok;
}

MatX mlp2_forward(const Mlp2& p, const MatX& x, Mlp2Cache* cache) {
  MatX h_pre = (p.w1 * x).colwise() + p.b1;
  MatX h = h_pre.cwiseMax(0.0);
  MatX y = (p.w2 * h).colwise() + p.b2;
  if (cache) {
    cache->x = x;
    cache->h_pre = std::move(h_pre);
    cache->h = std::move(h);
  }
  return y;
}

MatX mlp2_backward(const Mlp2& p, const Mlp2Cache& cache, const MatX& dy, Mlp2& grad) {
  grad.w2 += dy * cache.h.transpose();
  grad.b2 += dy.rowwise().sum();
  MatX dh = p.w2.transpose() * dy;
  MatX dh_pre = (cache.h_pre.array() > 0.0).select(dh, MatX::Zero(dh.rows(), dh.cols()));
  grad.w1 += dh_pre * cache.x.transpose();
  grad.b1 += dh_pre.rowwise().sum();
  return p.w1.transpose() * dh_pre;
}

MatX attention_mix(const AttnParams& p, const MatX& queries, const MatX& tokens, int heads,
                   AttnCache* cache) {
  const int d = static_cast<int>(queries.rows());
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  MatX q = (p.wq * queries).colwise() + p.bq;
  MatX k = (p.wk * tokens).colwise() + p.bk;
  MatX v = (p.wv * tokens).colwise() + p.bv;

  MatX mixed(d, queries.cols());
  std::vector<MatX> attn(heads);
  for (int h = 0; h < heads; ++h) {
    const auto qh = q.middleRows(h * dh, dh);
    const auto kh = k.middleRows(h * dh, dh);
    const auto vh = v.middleRows(h * dh, dh);
    MatX scores = qh.transpose() * kh * scale; // n x m
    for (int r = 0; r < scores.rows(); ++r) {
      const double mx = scores.row(r).maxCoeff();
      scores.row(r) = (scores.row(r).array() - mx).exp();
      scores.row(r) /= scores.row(r).sum();
    }
    mixed.middleRows(h * dh, dh) = vh * scores.transpose();
    attn[h] = std::move(scores);
  }
  MatX out = (p.wo * mixed).colwise() + p.bo;
  if (cache) {
    cache->queries = queries;
    cache->tokens = tokens;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->attn = std::move(attn);
    cache->mixed = std::move(mixed);
  }
  return out;
}

MatX cross_attend_forward(const AttnParams& p, const MatX& queries, const MatX& tokens, int heads,
                          AttnCache* cache) {
  AttnCache local;
  AttnCache* c = cache ? cache : &local;
  MatX mha = attention_mix(p, queries, tokens, heads, c);
  c->res1 = queries + mha;
  c->ffn_pre = (p.f1 * c->res1).colwise() + p.fb1;
  c->ffn_h = c->ffn_pre.cwiseMax(0.0);
  return c->res1 + ((p.f2 * c->ffn_h).colwise() + p.fb2);
}

void cross_attend_backward(const AttnParams& p, const AttnCache& cache, int heads, const MatX& dy,
                           AttnParams& grad, MatX& dqueries, MatX& dtokens) {
  // out = res1 + f2*relu(f1*res1 + fb1) + fb2
  grad.f2 += dy * cache.ffn_h.transpose();
  grad.fb2 += dy.rowwise().sum();
  MatX dh = p.f2.transpose() * dy;
  MatX dh_pre = (cache.ffn_pre.array() > 0.0).select(dh, MatX::Zero(dh.rows(), dh.cols()));
  grad.f1 += dh_pre * cache.res1.transpose();
  grad.fb1 += dh_pre.rowwise().sum();
  MatX dres1 = dy + p.f1.transpose() * dh_pre;

  // res1 = queries + wo*mixed + bo
  grad.wo += dres1 * cache.mixed.transpose();
  grad.bo += dres1.rowwise().sum();
  MatX dmixed = p.wo.transpose() * dres1;

  const int d = static_cast<int>(cache.queries.rows());
  const int dh_size = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh_size));
  MatX dq = MatX::Zero(d, cache.queries.cols());
  MatX dk = MatX::Zero(d, cache.tokens.cols());
  MatX dv = MatX::Zero(d, cache.tokens.cols());
  for (int h = 0; h < heads; ++h) {
    const auto qh = cache.q.middleRows(h * dh_size, dh_size);
    const auto kh = cache.k.middleRows(h * dh_size, dh_size);
    const auto vh = cache.v.middleRows(h * dh_size, dh_size);
    const MatX& attn = cache.attn[h];
    const auto dmix_h = dmixed.middleRows(h * dh_size, dh_size);

    dv.middleRows(h * dh_size, dh_size) += dmix_h * attn;
    MatX dattn = dmix_h.transpose() * vh; // n x m
    MatX dscores(dattn.rows(), dattn.cols());
    for (int r = 0; r < dattn.rows(); ++r) {
      const double dot = dattn.row(r).dot(attn.row(r));
      dscores.row(r) = attn.row(r).array() * (dattn.row(r).array() - dot);
    }
    dq.middleRows(h * dh_size, dh_size) += kh * dscores.transpose() * scale;
    dk.middleRows(h * dh_size, dh_size) += qh * dscores * scale;
  }

  grad.wq += dq * cache.queries.transpose();
  grad.bq += dq.rowwise().sum();
  grad.wk += dk * cache.tokens.transpose();
  grad.bk += dk.rowwise().sum();
  grad.wv += dv * cache.tokens.transpose();
  grad.bv += dv.rowwise().sum();

  dqueries += dres1 + p.wq.transpose() * dq;
  dtokens += p.wk.transpose() * dk + p.wv.transpose() * dv;
}

MatX dfa_forward(const DfaParams& p, const MatX& emb, const std::vector<Mat2X>& sample_points,
                 const Mat2X& token_pos, const MatX& token_feat, double sigma, DfaCache* cache) {
  const int n = static_cast<int>(emb.cols());
  const int m = static_cast<int>(token_pos.cols());
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);

  MatX mean_weight = MatX::Zero(m, n);
  for (int i = 0; i < n; ++i) {
    const auto& pts = sample_points[i];
    const int s = static_cast<int>(pts.cols());
    if (s == 0) continue; // fully masked anchors aggregate nothing
    VecX w(m);
    for (int k = 0; k < s; ++k) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int t = 0; t < m; ++t) {
        w[t] = -(token_pos.col(t) - pts.col(k)).squaredNorm() * inv2s2;
        mx = std::max(mx, w[t]);
      }
      w = (w.array() - mx).exp();
      mean_weight.col(i) += w / w.sum();
    }
    mean_weight.col(i) /= s;
  }

  // Column-by-column products keep results identical whether an item is
  // scored alone or inside a batch.
  MatX agg(emb.rows(), n);
  MatX out(emb.rows(), n);
  for (int i = 0; i < n; ++i) {
    agg.col(i) = token_feat * mean_weight.col(i);
    out.col(i) = emb.col(i) + p.proj * agg.col(i) + p.bias;
  }
  if (cache) {
    cache->emb = emb;
    cache->mean_weight = std::move(mean_weight);
    cache->agg = std::move(agg);
  }
  return out;
}

void dfa_backward(const DfaParams& p, const DfaCache& cache, const MatX& dy, DfaParams& grad,
                  MatX& demb, MatX& dtoken_feat) {
  grad.proj += dy * cache.agg.transpose();
  grad.bias += dy.rowwise().sum();
  demb += dy;
  dtoken_feat += p.proj.transpose() * dy * cache.mean_weight.transpose();
}

VecX head_forward(const HeadParams& p, const MatX& x) {
  VecX out(x.cols());
  for (int i = 0; i < x.cols(); ++i) out[i] = p.w.dot(x.col(i)) + p.b;
  return out;
}

void head_backward(const HeadParams& p, const MatX& x, const VecX& dy, HeadParams& grad,
                   MatX& dx) {
  grad.w += x * dy;
  grad.b += dy.sum();
  dx += p.w * dy.transpose();
}

VecX soft_targets(const Eigen::Ref<const VecX>& distances, double lambda) {
  if (!distances.allFinite()) throw std::invalid_argument("soft_targets: non-finite distance");
  if (lambda < 0.0) throw std::invalid_argument("soft_targets: lambda must be >= 0");
  VecX z = -lambda * distances;
  const double mx = z.maxCoeff();
  VecX e = (z.array() - mx).exp();
  return e / e.sum();
}

double cross_entropy(const Eigen::Ref<const VecX>& scores, const Eigen::Ref<const VecX>& targets) {
  const double mx = scores.maxCoeff();
  const double lse = std::log((scores.array() - mx).exp().sum()) + mx;
  return -(targets.array() * (scores.array() - lse)).sum();
}

VecX cross_entropy_backward(const Eigen::Ref<const VecX>& scores,
                            const Eigen::Ref<const VecX>& targets) {
  const double mx = scores.maxCoeff();
  VecX p = (scores.array() - mx).exp();
  p /= p.sum();
  return p - targets;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double bce_with_logit(double logit, double label) {
  // log(1 + e^-|x|) form keeps the loss finite for large logits.
  const double abs_l = std::abs(logit);
  return std::log1p(std::exp(-abs_l)) + std::max(logit, 0.0) - logit * label;
}

double bce_with_logit_backward(double logit, double label) { return sigmoid(logit) - label; }

}  // namespace fplan
