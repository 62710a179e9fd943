// Copyright 2026 The encleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// The pre-trained text encoder: a small pre-norm transformer trained from
// scratch with the masked-language-modeling objective. Forward, analytic
// backward, Adam pre-training, and pooled-embedding extraction.

#ifndef ENCLEAK_ENCODER_HPP_
#define ENCLEAK_ENCODER_HPP_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "encleak/corpus.hpp"
#include "encleak/linalg.hpp"
#include "encleak/rng.hpp"

namespace encleak {

inline constexpr double kAttentionMaskValue = -1e30;

struct EncoderConfig {
  int vocab_size = 0;
  int hidden_dim = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_dim = 256;
  int max_len = 24;
  std::uint64_t seed = 0;

  void validate() const {
    if (vocab_size < Vocab::kNumSpecials + 1)
      throw std::invalid_argument("encoder config: vocab size too small");
    if (hidden_dim < 1 || n_layers < 1 || n_heads < 1 || ffn_dim < 1)
      throw std::invalid_argument("encoder config: counts must be >= 1");
    if (hidden_dim % n_heads != 0)
      throw std::invalid_argument("encoder config: hidden_dim must divide by n_heads");
    if (max_len < 3) throw std::invalid_argument("encoder config: max_len must be >= 3");
  }

  int head_dim() const { return hidden_dim / n_heads; }
};

enum class Stage { PreTrained, FineTuned };

inline std::string stage_name(Stage s) {
  return s == Stage::PreTrained ? "pretrained" : "finetuned";
}

inline Stage parse_stage(std::string_view s) {
  if (s == "pretrained") return Stage::PreTrained;
  if (s == "finetuned") return Stage::FineTuned;
  throw std::invalid_argument("unknown stage tag: " + std::string(s));
}

template <class S>
struct EncoderLayerParams {
  Mat<S> ln1_scale, ln1_shift;  // 1 x d
  Mat<S> wq, wk, wv, wo;        // d x d
  Mat<S> bq, bk, bv, bo;        // 1 x d
  Mat<S> ln2_scale, ln2_shift;  // 1 x d
  Mat<S> ff1_w;                 // d x ffn
  Mat<S> ff1_b;                 // 1 x ffn
  Mat<S> ff2_w;                 // ffn x d
  Mat<S> ff2_b;                 // 1 x d
};

template <class S>
struct EncoderParams {
  EncoderConfig config;
  Stage stage = Stage::PreTrained;
  Mat<S> tok_embed;  // V x d
  Mat<S> pos_embed;  // L x d
  std::vector<EncoderLayerParams<S>> layers;
  Mat<S> final_scale, final_shift;  // 1 x d
  Mat<S> mlm_w;                     // d x V (untied from tok_embed)
  Mat<S> mlm_b;                     // 1 x V

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    visit_encoder_tensors(*this, [&](const std::string&, const Mat<S>& m) {
      n += static_cast<std::int64_t>(m.size());
    });
    return n;
  }
};

// Visits every tensor in a fixed order; this order defines the optimizer
// state layout, serialization layout, and gradient-check enumeration.
template <class P, class F>
inline void visit_encoder_tensors(P& p, F&& f) {
  f(std::string("tok_embed"), p.tok_embed);
  f(std::string("pos_embed"), p.pos_embed);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& lay = p.layers[l];
    const std::string prefix = "layers." + std::to_string(l) + ".";
    f(prefix + "ln1_scale", lay.ln1_scale);
    f(prefix + "ln1_shift", lay.ln1_shift);
    f(prefix + "wq", lay.wq);
    f(prefix + "bq", lay.bq);
    f(prefix + "wk", lay.wk);
    f(prefix + "bk", lay.bk);
    f(prefix + "wv", lay.wv);
    f(prefix + "bv", lay.bv);
    f(prefix + "wo", lay.wo);
    f(prefix + "bo", lay.bo);
    f(prefix + "ln2_scale", lay.ln2_scale);
    f(prefix + "ln2_shift", lay.ln2_shift);
    f(prefix + "ff1_w", lay.ff1_w);
    f(prefix + "ff1_b", lay.ff1_b);
    f(prefix + "ff2_w", lay.ff2_w);
    f(prefix + "ff2_b", lay.ff2_b);
  }
  f(std::string("final_scale"), p.final_scale);
  f(std::string("final_shift"), p.final_shift);
  f(std::string("mlm_w"), p.mlm_w);
  f(std::string("mlm_b"), p.mlm_b);
}

template <class S>
inline EncoderParams<S> zeros_like(const EncoderParams<S>& src) {
  EncoderParams<S> z;
  z.config = src.config;
  z.stage = src.stage;
  z.layers.resize(src.layers.size());
  std::vector<const Mat<S>*> srcs;
  visit_encoder_tensors(src, [&](const std::string&, const Mat<S>& m) { srcs.push_back(&m); });
  std::vector<Mat<S>*> dsts;
  visit_encoder_tensors(z, [&](const std::string&, Mat<S>& m) { dsts.push_back(&m); });
  for (std::size_t i = 0; i < srcs.size(); ++i)
    *dsts[i] = Mat<S>::Zero(srcs[i]->rows(), srcs[i]->cols());
  return z;
}

// normal(0, 0.02) weights, zero shifts/biases, unit normalization scales.
template <class S>
inline EncoderParams<S> init_encoder_params(const EncoderConfig& config) {
  config.validate();
  const int d = config.hidden_dim;
  const int v = config.vocab_size;
  Rng rng(derive_seed(config.seed, "encoder.init"));
  EncoderParams<S> p;
  p.config = config;
  p.stage = Stage::PreTrained;
  auto weight = [&](int r, int c) {
    Mat<S> m(r, c);
    fill_normal(m, rng, 0.02);
    return m;
  };
  p.tok_embed = weight(v, d);
  p.pos_embed = weight(config.max_len, d);
  p.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (auto& lay : p.layers) {
    lay.ln1_scale = Mat<S>::Ones(1, d);
    lay.ln1_shift = Mat<S>::Zero(1, d);
    lay.wq = weight(d, d);
    lay.bq = Mat<S>::Zero(1, d);
    lay.wk = weight(d, d);
    lay.bk = Mat<S>::Zero(1, d);
    lay.wv = weight(d, d);
    lay.bv = Mat<S>::Zero(1, d);
    lay.wo = weight(d, d);
    lay.bo = Mat<S>::Zero(1, d);
    lay.ln2_scale = Mat<S>::Ones(1, d);
    lay.ln2_shift = Mat<S>::Zero(1, d);
    lay.ff1_w = weight(d, config.ffn_dim);
    lay.ff1_b = Mat<S>::Zero(1, config.ffn_dim);
    lay.ff2_w = weight(config.ffn_dim, d);
    lay.ff2_b = Mat<S>::Zero(1, d);
  }
  p.final_scale = Mat<S>::Ones(1, d);
  p.final_shift = Mat<S>::Zero(1, d);
  p.mlm_w = weight(d, v);
  p.mlm_b = Mat<S>::Zero(1, v);
  return p;
}

// ---------------------------------------------------------------------------
// Forward pass with cache
// ---------------------------------------------------------------------------

template <class S>
struct LayerCache {
  Mat<S> x;                   // sublayer input
  Mat<S> n1;                  // LN1 output
  Vec<S> ln1_mean, ln1_inv;   // per-position stats
  Mat<S> q, k, v;             // L x d
  std::vector<Mat<S>> attn;   // per head, L x L row-softmax
  Mat<S> ctx;                 // concatenated head outputs, pre-Wo
  Mat<S> x1;                  // after attention residual
  Mat<S> n2;
  Vec<S> ln2_mean, ln2_inv;
  Mat<S> u;                   // FFN pre-activation, L x ffn
  Mat<S> g;                   // gelu(u)
};

template <class S>
struct ForwardCache {
  std::vector<std::vector<LayerCache<S>>> layers;  // [seq][layer]
  std::vector<Mat<S>> final_in;                    // input to the final LN
  std::vector<Vec<S>> lnf_mean, lnf_inv;
  std::vector<std::vector<int>> masks;
};

template <class S>
struct HiddenStates {
  std::vector<Mat<S>> states;  // per sequence, L x d final-layer states
  Mat<S> pooled;               // B x d, CLS position of the final layer
};

namespace detail {

inline constexpr double kLayerNormEps = 1e-5;

// y = scale .* (x - mean) / sqrt(var + eps) + shift, row-wise over features.
template <class S>
inline Mat<S> layer_norm(const Mat<S>& x, const Mat<S>& scale, const Mat<S>& shift,
                         Vec<S>& mean_out, Vec<S>& inv_out) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  Mat<S> y(rows, cols);
  mean_out.resize(rows);
  inv_out.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const S mean = x.row(r).mean();
    const S var = (x.row(r).array() - mean).square().sum() / S(cols);
    const S inv = S(1) / std::sqrt(var + S(kLayerNormEps));
    mean_out(r) = mean;
    inv_out(r) = inv;
    y.row(r) =
        (((x.row(r).array() - mean) * inv) * scale.array() + shift.array()).matrix();
  }
  return y;
}

// Backward through layer_norm; accumulates parameter grads, returns dx.
template <class S>
inline Mat<S> layer_norm_backward(const Mat<S>& x, const Mat<S>& scale,
                                  const Vec<S>& mean, const Vec<S>& inv,
                                  const Mat<S>& dy, Mat<S>& dscale, Mat<S>& dshift) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  Mat<S> dx(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    Eigen::Array<S, 1, Eigen::Dynamic> xhat =
        (x.row(r).array() - mean(r)) * inv(r);
    Eigen::Array<S, 1, Eigen::Dynamic> dyr = dy.row(r).array();
    dscale.array() += dyr * xhat;
    dshift.array() += dyr;
    Eigen::Array<S, 1, Eigen::Dynamic> dxhat = dyr * scale.array();
    const S m1 = dxhat.mean();
    const S m2 = (dxhat * xhat).mean();
    dx.row(r) = (inv(r) * (dxhat - m1 - xhat * m2)).matrix();
  }
  return dx;
}

template <class S>
inline void check_ids(const std::vector<int>& ids, int vocab_size, int max_len) {
  if (static_cast<int>(ids.size()) != max_len)
    throw std::invalid_argument("sequence length does not match encoder max_len");
  for (int id : ids)
    if (id < 0 || id >= vocab_size) throw std::out_of_range("token id out of range");
}

}  // namespace detail

// Core forward over raw id/mask rows. `cache` may be null for inference.
template <class S>
inline HiddenStates<S> encoder_forward_ids(const EncoderParams<S>& params,
                                           const std::vector<std::vector<int>>& ids,
                                           const std::vector<std::vector<int>>& masks,
                                           ForwardCache<S>* cache) {
  const EncoderConfig& cfg = params.config;
  const int L = cfg.max_len;
  const int d = cfg.hidden_dim;
  const int H = cfg.n_heads;
  const int dh = cfg.head_dim();
  const S inv_sqrt_dh = S(1) / std::sqrt(S(dh));
  const std::size_t B = ids.size();
  if (masks.size() != B) throw std::invalid_argument("ids/masks size mismatch");

  HiddenStates<S> out;
  out.states.resize(B);
  out.pooled.resize(static_cast<Eigen::Index>(B), d);
  if (cache) {
    cache->layers.assign(B, {});
    cache->final_in.resize(B);
    cache->lnf_mean.resize(B);
    cache->lnf_inv.resize(B);
    cache->masks = masks;
  }

  for (std::size_t b = 0; b < B; ++b) {
    detail::check_ids<S>(ids[b], cfg.vocab_size, L);
    const std::vector<int>& mask = masks[b];
    Mat<S> x(L, d);
    for (int p = 0; p < L; ++p)
      x.row(p) = params.tok_embed.row(ids[b][static_cast<std::size_t>(p)]) +
                 params.pos_embed.row(p);
    if (cache) cache->layers[b].resize(params.layers.size());

    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      const auto& lay = params.layers[l];
      LayerCache<S> lc;
      lc.x = x;
      lc.n1 = detail::layer_norm(x, lay.ln1_scale, lay.ln1_shift, lc.ln1_mean, lc.ln1_inv);
      lc.q = (lc.n1 * lay.wq).rowwise() + lay.bq.row(0);
      lc.k = (lc.n1 * lay.wk).rowwise() + lay.bk.row(0);
      lc.v = (lc.n1 * lay.wv).rowwise() + lay.bv.row(0);
      lc.ctx.resize(L, d);
      lc.attn.resize(static_cast<std::size_t>(H));
      for (int h = 0; h < H; ++h) {
        auto qh = lc.q.middleCols(h * dh, dh);
        auto kh = lc.k.middleCols(h * dh, dh);
        auto vh = lc.v.middleCols(h * dh, dh);
        Mat<S> scores = qh * kh.transpose() * inv_sqrt_dh;
        for (int j = 0; j < L; ++j)
          if (mask[static_cast<std::size_t>(j)] == 0)
            scores.col(j).array() += S(kAttentionMaskValue);
        softmax_rows(scores);
        lc.ctx.middleCols(h * dh, dh) = scores * vh;
        lc.attn[static_cast<std::size_t>(h)] = std::move(scores);
      }
      Mat<S> attn_out = (lc.ctx * lay.wo).rowwise() + lay.bo.row(0);
      lc.x1 = x + attn_out;
      lc.n2 = detail::layer_norm(lc.x1, lay.ln2_scale, lay.ln2_shift, lc.ln2_mean, lc.ln2_inv);
      lc.u = (lc.n2 * lay.ff1_w).rowwise() + lay.ff1_b.row(0);
      lc.g = lc.u.unaryExpr([](S t) { return gelu(t); });
      Mat<S> ffn_out = (lc.g * lay.ff2_w).rowwise() + lay.ff2_b.row(0);
      x = lc.x1 + ffn_out;
      if (cache) cache->layers[b][l] = std::move(lc);
    }

    Vec<S> fmean, finv;
    Mat<S> y = detail::layer_norm(x, params.final_scale, params.final_shift, fmean, finv);
    if (cache) {
      cache->final_in[b] = std::move(x);
      cache->lnf_mean[b] = std::move(fmean);
      cache->lnf_inv[b] = std::move(finv);
    }
    out.pooled.row(static_cast<Eigen::Index>(b)) = y.row(0);
    out.states[b] = std::move(y);
  }
  return out;
}

template <class S>
inline HiddenStates<S> encoder_forward(const EncoderParams<S>& params,
                                       const std::vector<TokenSequence>& batch,
                                       ForwardCache<S>* cache = nullptr) {
  std::vector<std::vector<int>> ids, masks;
  ids.reserve(batch.size());
  masks.reserve(batch.size());
  for (const auto& seq : batch) {
    ids.push_back(seq.ids);
    masks.push_back(seq.mask);
  }
  return encoder_forward_ids(params, ids, masks, cache);
}

// Backward from gradients on the final-layer states (and pooled rows, which
// fold into position 0). Token ids are needed to scatter embedding grads.
template <class S>
inline EncoderParams<S> encoder_backward(const EncoderParams<S>& params,
                                         const std::vector<std::vector<int>>& ids,
                                         const ForwardCache<S>& cache,
                                         std::vector<Mat<S>> d_states,
                                         const Mat<S>* d_pooled = nullptr) {
  const EncoderConfig& cfg = params.config;
  const int L = cfg.max_len;
  const int d = cfg.hidden_dim;
  const int H = cfg.n_heads;
  const int dh = cfg.head_dim();
  const S inv_sqrt_dh = S(1) / std::sqrt(S(dh));
  EncoderParams<S> grads = zeros_like(params);

  for (std::size_t b = 0; b < ids.size(); ++b) {
    Mat<S>& dy = d_states[b];
    if (dy.size() == 0) dy = Mat<S>::Zero(L, d);
    if (d_pooled) dy.row(0) += d_pooled->row(static_cast<Eigen::Index>(b));

    // Final layer norm.
    Mat<S> dx = detail::layer_norm_backward(cache.final_in[b], params.final_scale,
                                            cache.lnf_mean[b], cache.lnf_inv[b], dy,
                                            grads.final_scale, grads.final_shift);

    for (std::size_t li = params.layers.size(); li-- > 0;) {
      const auto& lay = params.layers[li];
      auto& glay = grads.layers[li];
      const LayerCache<S>& lc = cache.layers[b][li];

      // FFN block: x_out = x1 + gelu(LN2(x1) W1 + b1) W2 + b2
      Mat<S> dffn = dx;  // gradient on ffn_out
      Mat<S> dg = dffn * lay.ff2_w.transpose();
      glay.ff2_w += lc.g.transpose() * dffn;
      glay.ff2_b += dffn.colwise().sum();
      Mat<S> du = dg.cwiseProduct(lc.u.unaryExpr([](S t) { return gelu_grad(t); }));
      Mat<S> dn2 = du * lay.ff1_w.transpose();
      glay.ff1_w += lc.n2.transpose() * du;
      glay.ff1_b += du.colwise().sum();
      Mat<S> dx1 = dx + detail::layer_norm_backward(lc.x1, lay.ln2_scale, lc.ln2_mean,
                                                    lc.ln2_inv, dn2, glay.ln2_scale,
                                                    glay.ln2_shift);

      // Attention block: x1 = x + (heads(LN1(x)) Wo + bo)
      Mat<S> dattn_out = dx1;
      Mat<S> dctx = dattn_out * lay.wo.transpose();
      glay.wo += lc.ctx.transpose() * dattn_out;
      glay.bo += dattn_out.colwise().sum();
      Mat<S> dq = Mat<S>::Zero(L, d);
      Mat<S> dk = Mat<S>::Zero(L, d);
      Mat<S> dv = Mat<S>::Zero(L, d);
      for (int h = 0; h < H; ++h) {
        const Mat<S>& a = lc.attn[static_cast<std::size_t>(h)];
        auto qh = lc.q.middleCols(h * dh, dh);
        auto kh = lc.k.middleCols(h * dh, dh);
        auto vh = lc.v.middleCols(h * dh, dh);
        Mat<S> dch = dctx.middleCols(h * dh, dh);
        Mat<S> da = dch * vh.transpose();
        dv.middleCols(h * dh, dh) = a.transpose() * dch;
        // Row-wise softmax backward.
        Mat<S> ds(L, L);
        for (int r = 0; r < L; ++r) {
          const S dot = a.row(r).dot(da.row(r));
          ds.row(r) = (a.row(r).array() * (da.row(r).array() - dot)).matrix();
        }
        dq.middleCols(h * dh, dh) = ds * kh * inv_sqrt_dh;
        dk.middleCols(h * dh, dh) = ds.transpose() * qh * inv_sqrt_dh;
      }
      Mat<S> dn1 = dq * lay.wq.transpose() + dk * lay.wk.transpose() + dv * lay.wv.transpose();
      glay.wq += lc.n1.transpose() * dq;
      glay.bq += dq.colwise().sum();
      glay.wk += lc.n1.transpose() * dk;
      glay.bk += dk.colwise().sum();
      glay.wv += lc.n1.transpose() * dv;
      glay.bv += dv.colwise().sum();
      dx = dx1 + detail::layer_norm_backward(lc.x, lay.ln1_scale, lc.ln1_mean, lc.ln1_inv,
                                             dn1, glay.ln1_scale, glay.ln1_shift);
    }

    // Embedding scatter.
    for (int p = 0; p < L; ++p) {
      grads.tok_embed.row(ids[b][static_cast<std::size_t>(p)]) += dx.row(p);
      grads.pos_embed.row(p) += dx.row(p);
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// MLM objective
// ---------------------------------------------------------------------------

template <class S>
struct MlmResult {
  S loss = S(0);
  EncoderParams<S> grads;  // empty unless requested
};

// Mean cross-entropy over target positions; optionally with full gradients.
template <class S>
inline MlmResult<S> mlm_loss(const EncoderParams<S>& params, const MaskedBatch& batch,
                             bool compute_grads = true) {
  const EncoderConfig& cfg = params.config;
  const int L = cfg.max_len;
  const int d = cfg.hidden_dim;
  std::size_t n_targets = 0;
  for (const auto& t : batch.target_ids)
    for (int v : t)
      if (v != MaskedBatch::kIgnore) ++n_targets;
  if (n_targets == 0) throw std::invalid_argument("no target positions in batch");

  ForwardCache<S> cache;
  HiddenStates<S> hs = encoder_forward_ids(params, batch.input_ids, batch.masks, &cache);

  MlmResult<S> result;
  const S scale = S(1) / S(n_targets);
  std::vector<Mat<S>> d_states;
  if (compute_grads) {
    d_states.resize(batch.size());
    result.grads = zeros_like(params);
  }

  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (compute_grads) d_states[b] = Mat<S>::Zero(L, d);
    for (int p = 0; p < L; ++p) {
      const int target = batch.target_ids[b][static_cast<std::size_t>(p)];
      if (target == MaskedBatch::kIgnore) continue;
      Vec<S> logits =
          (hs.states[b].row(p) * params.mlm_w).transpose() + params.mlm_b.transpose();
      Vec<S> probs;
      result.loss += scale * softmax_cross_entropy(logits, target, probs);
      if (!compute_grads) continue;
      probs(target) -= S(1);
      probs *= scale;
      result.grads.mlm_w += hs.states[b].row(p).transpose() * probs.transpose();
      result.grads.mlm_b += probs.transpose();
      d_states[b].row(p) += (params.mlm_w * probs).transpose();
    }
  }

  if (compute_grads) {
    EncoderParams<S> enc_grads =
        encoder_backward(params, batch.input_ids, cache, std::move(d_states));
    // Fold the encoder-side grads into the result (mlm head grads were
    // accumulated above).
    std::vector<const Mat<S>*> src;
    visit_encoder_tensors(enc_grads, [&](const std::string&, const Mat<S>& m) {
      src.push_back(&m);
    });
    std::vector<Mat<S>*> dst;
    visit_encoder_tensors(result.grads, [&](const std::string&, Mat<S>& m) {
      dst.push_back(&m);
    });
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (dst[i] == &result.grads.mlm_w || dst[i] == &result.grads.mlm_b) continue;
      *dst[i] += *src[i];
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Pre-training
// ---------------------------------------------------------------------------

struct PretrainOptions {
  int steps = 2000;
  int batch_size = 32;
  double lr = 1e-3;
  double mask_prob = 0.15;
  std::uint64_t seed = 0;
};

template <class S>
struct PretrainResult {
  EncoderParams<S> params;
  std::vector<double> loss_curve;
};

// Adam-optimized MLM training; epoch-shuffled batches; deterministic in
// (config, corpus, vocab, options).
template <class S>
inline PretrainResult<S> pretrain(const EncoderConfig& config, const Dataset& corpus,
                                  const Vocab& vocab, const PretrainOptions& opts) {
  if (corpus.empty()) throw std::invalid_argument("empty corpus");
  EncoderConfig cfg = config;
  cfg.vocab_size = vocab.size();
  PretrainResult<S> result;
  result.params = init_encoder_params<S>(cfg);
  if (opts.steps == 0) return result;

  std::vector<TokenSequence> sequences;
  sequences.reserve(corpus.size());
  for (const auto& e : corpus.examples)
    sequences.push_back(encode_text(e.text, vocab, cfg.max_len));

  AdamOptimizer<S> adam(opts.lr);
  std::vector<Mat<S>*> tensors;
  visit_encoder_tensors(result.params,
                        [&](const std::string&, Mat<S>& m) { tensors.push_back(&m); });

  Rng order_rng(derive_seed(opts.seed, "pretrain.order"));
  std::vector<std::size_t> order(sequences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  order_rng.shuffle(order);
  std::size_t cursor = 0;

  result.loss_curve.reserve(static_cast<std::size_t>(opts.steps));
  for (int step = 0; step < opts.steps; ++step) {
    std::vector<TokenSequence> batch;
    batch.reserve(static_cast<std::size_t>(opts.batch_size));
    for (int i = 0; i < opts.batch_size; ++i) {
      if (cursor == order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(sequences[order[cursor++]]);
    }
    MaskedBatch mb = make_mlm_batch(batch, opts.mask_prob,
                                    derive_seed(opts.seed, "pretrain.mask",
                                                static_cast<std::uint64_t>(step)),
                                    vocab.size());
    MlmResult<S> r = mlm_loss(result.params, mb, /*compute_grads=*/true);
    if (!std::isfinite(static_cast<double>(r.loss)))
      throw std::runtime_error("pretraining diverged at step " + std::to_string(step));
    std::vector<const Mat<S>*> grads;
    visit_encoder_tensors(r.grads,
                          [&](const std::string&, const Mat<S>& m) { grads.push_back(&m); });
    adam.step(tensors, grads);
    result.loss_curve.push_back(static_cast<double>(r.loss));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Embedding extraction
// ---------------------------------------------------------------------------

// Pooled (CLS) embeddings for a list of texts, in chunks.
template <class S>
inline Mat<S> embed(const EncoderParams<S>& params, const std::vector<TextExample>& texts,
                    const Vocab& vocab) {
  const int d = params.config.hidden_dim;
  Mat<S> out(static_cast<Eigen::Index>(texts.size()), d);
  constexpr std::size_t kChunk = 32;
  std::vector<TokenSequence> batch;
  for (std::size_t start = 0; start < texts.size(); start += kChunk) {
    const std::size_t stop = std::min(texts.size(), start + kChunk);
    batch.clear();
    for (std::size_t i = start; i < stop; ++i)
      batch.push_back(encode_text(texts[i].text, vocab, params.config.max_len));
    HiddenStates<S> hs = encoder_forward(params, batch);
    for (std::size_t i = start; i < stop; ++i)
      out.row(static_cast<Eigen::Index>(i)) =
          hs.pooled.row(static_cast<Eigen::Index>(i - start));
  }
  return out;
}

// Final-layer states of the content tokens (CLS/SEP/PAD rows dropped).
template <class S>
inline Mat<S> content_token_states(const EncoderParams<S>& params, std::string_view text,
                                   const Vocab& vocab) {
  TokenSequence seq = encode_text(text, vocab, params.config.max_len);
  HiddenStates<S> hs = encoder_forward(params, {seq});
  const int content = seq.real_length() - 2;
  Mat<S> out(content, params.config.hidden_dim);
  for (int i = 0; i < content; ++i) out.row(i) = hs.states[0].row(i + 1);
  return out;
}

// L2 distance between two parameter sets with identical shapes.
template <class S>
inline double parameter_distance(const EncoderParams<S>& a, const EncoderParams<S>& b) {
  double sq = 0;
  std::vector<const Mat<S>*> ta, tb;
  visit_encoder_tensors(a, [&](const std::string&, const Mat<S>& m) { ta.push_back(&m); });
  visit_encoder_tensors(b, [&](const std::string&, const Mat<S>& m) { tb.push_back(&m); });
  for (std::size_t i = 0; i < ta.size(); ++i)
    sq += static_cast<double>((*ta[i] - *tb[i]).squaredNorm());
  return std::sqrt(sq);
}

}  // namespace encleak

#endif  // ENCLEAK_ENCODER_HPP_
