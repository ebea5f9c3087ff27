#include "relgt/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace relgt {

namespace {

Tensor xavier(int64_t r, int64_t c, Rng& rng) {
  Tensor t(r, c);
  double a = std::sqrt(6.0 / static_cast<double>(r + c));
  for (double& v : t.data) v = rng.uniform(-a, a);
  return t;
}

}  // namespace

void init_centroids(Centroids& cent, const Tensor& feats, int b, double decay, Rng& rng) {
  const int64_t n = feats.r;
  const int64_t d = feats.c;
  RELGT_CHECK(n >= 1, "centroid init needs at least one feature");
  cent.c = Tensor(b, d);
  cent.decay = decay;

  // farthest-point pick over the batch
  std::vector<int64_t> picked;
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  picked.push_back(0);
  while (static_cast<int64_t>(picked.size()) < std::min<int64_t>(b, n)) {
    int64_t last = picked.back();
    int64_t best = -1;
    double best_dist = -1.0;
    for (int64_t i = 0; i < n; ++i) {
      double dist = 0.0;
      for (int64_t j = 0; j < d; ++j) {
        double diff = feats.at(i, j) - feats.at(last, j);
        dist += diff * diff;
      }
      min_dist[i] = std::min(min_dist[i], dist);
      if (min_dist[i] > best_dist) {
        best_dist = min_dist[i];
        best = i;
      }
    }
    if (best < 0 || best_dist <= 0.0) break;  // all remaining points coincide
    picked.push_back(best);
  }
  for (int64_t i = 0; i < b; ++i) {
    if (i < static_cast<int64_t>(picked.size())) {
      for (int64_t j = 0; j < d; ++j) cent.c.at(i, j) = feats.at(picked[i], j);
    } else {
      for (int64_t j = 0; j < d; ++j) cent.c.at(i, j) = rng.normal(0.0, 0.01);
    }
  }
  cent.ema_counts.assign(b, 1.0);
  cent.ema_sums = cent.c;
  cent.initialized = true;
}

void update_centroids(Centroids& cent, const Tensor& feats) {
  RELGT_CHECK(cent.initialized, "centroids not initialized");
  const int64_t b = cent.c.r;
  const int64_t d = cent.c.c;
  RELGT_CHECK(feats.c == d, "feature width mismatch");
  const double m = cent.decay;

  std::vector<int64_t> count(b, 0);
  Tensor batch_sum(b, d);
  for (int64_t i = 0; i < feats.r; ++i) {
    int64_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int64_t cb = 0; cb < b; ++cb) {
      double dist = 0.0;
      for (int64_t j = 0; j < d; ++j) {
        double diff = feats.at(i, j) - cent.c.at(cb, j);
        dist += diff * diff;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = cb;
      }
    }
    ++count[best];
    for (int64_t j = 0; j < d; ++j) batch_sum.at(best, j) += feats.at(i, j);
  }

  for (int64_t cb = 0; cb < b; ++cb) {
    if (count[cb] == 0) continue;  // empty clusters untouched
    cent.ema_counts[cb] = m * cent.ema_counts[cb] + (1.0 - m) * static_cast<double>(count[cb]);
    for (int64_t j = 0; j < d; ++j) {
      cent.ema_sums.at(cb, j) = m * cent.ema_sums.at(cb, j) + (1.0 - m) * batch_sum.at(cb, j);
      cent.c.at(cb, j) = cent.ema_sums.at(cb, j) / std::max(cent.ema_counts[cb], 1e-8);
    }
  }
}

Model build_model(const Database& db, const ModelConfig& cfg, uint64_t param_seed) {
  RELGT_CHECK(cfg.tok.d % cfg.n_heads == 0, "head count must divide d");
  RELGT_CHECK(cfg.layers >= 1, "need at least one local layer");
  Model m;
  m.cfg = cfg;
  Rng rng(mix_seed(param_seed, 0x70a7a3u));

  m.tok = build_tokenizer_params(m.store, db, cfg.tok, rng);
  const int d = cfg.tok.d;

  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "local.l" + std::to_string(l) + ".";
    LayerSlots ls;
    ls.ln1_g = m.store.add(p + "ln1.g", Tensor::full(1, d, 1.0));
    ls.ln1_b = m.store.add(p + "ln1.b", Tensor::zeros(1, d));
    ls.wq = m.store.add(p + "wq", xavier(d, d, rng));
    ls.wk = m.store.add(p + "wk", xavier(d, d, rng));
    ls.wv = m.store.add(p + "wv", xavier(d, d, rng));
    ls.wo = m.store.add(p + "wo", xavier(d, d, rng));
    ls.ln2_g = m.store.add(p + "ln2.g", Tensor::full(1, d, 1.0));
    ls.ln2_b = m.store.add(p + "ln2.b", Tensor::zeros(1, d));
    ls.ffn_w1 = m.store.add(p + "ffn.w1", xavier(d, 4 * d, rng));
    ls.ffn_b1 = m.store.add(p + "ffn.b1", Tensor::zeros(1, 4 * d));
    ls.ffn_w2 = m.store.add(p + "ffn.w2", xavier(4 * d, d, rng));
    ls.ffn_b2 = m.store.add(p + "ffn.b2", Tensor::zeros(1, d));
    m.slots.layers.push_back(ls);
  }
  m.slots.pool_w_seed = m.store.add("pool.w_seed", Tensor::scalar(1.0));
  m.slots.pool_w_ctx = m.store.add("pool.w_ctx", Tensor::scalar(0.0));
  m.slots.global_wq = m.store.add("global.wq", xavier(d, d, rng));
  m.slots.global_wk = m.store.add("global.wk", xavier(d, d, rng));
  m.slots.global_wv = m.store.add("global.wv", xavier(d, d, rng));
  m.slots.out_w1 = m.store.add("output.w1", xavier(2 * d, d, rng));
  m.slots.out_b1 = m.store.add("output.b1", Tensor::zeros(1, d));
  m.slots.out_w2 = m.store.add("output.w2", xavier(d, d, rng));
  m.slots.out_b2 = m.store.add("output.b2", Tensor::zeros(1, d));
  m.slots.head_w = m.store.add("head.w", xavier(d, 1, rng));
  m.slots.head_b = m.store.add("head.b", Tensor::zeros(1, 1));

  m.centroids.decay = cfg.centroid_decay;
  return m;
}

Tape::Var local_forward(Tape& tape, const Model& m, Tape::Var h_token, int seed_index,
                        bool train, Rng& dropout_rng) {
  const int d = m.cfg.tok.d;
  const int heads = m.cfg.n_heads;
  const int dh = d / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int64_t k = tape.val(h_token).r;
  RELGT_CHECK(seed_index >= 0 && seed_index < k, "seed index out of range");

  Tape::Var x = h_token;
  for (const auto& ls : m.slots.layers) {
    Tape::Var a = tape.layer_norm_rows(x, tape.param(m.store, ls.ln1_g),
                                       tape.param(m.store, ls.ln1_b));
    Tape::Var q = tape.matmul(a, tape.param(m.store, ls.wq));
    Tape::Var kk = tape.matmul(a, tape.param(m.store, ls.wk));
    Tape::Var v = tape.matmul(a, tape.param(m.store, ls.wv));
    std::vector<Tape::Var> head_outs;
    for (int h = 0; h < heads; ++h) {
      Tape::Var qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
      Tape::Var kh = tape.slice_cols(kk, h * dh, (h + 1) * dh);
      Tape::Var vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
      Tape::Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), att_scale);
      Tape::Var p = tape.softmax_rows(scores);
      head_outs.push_back(tape.matmul(p, vh));
    }
    Tape::Var attn = tape.matmul(tape.concat_cols(head_outs), tape.param(m.store, ls.wo));
    attn = tape.dropout(attn, m.cfg.dropout, dropout_rng, train);
    x = tape.add(x, attn);

    Tape::Var f = tape.layer_norm_rows(x, tape.param(m.store, ls.ln2_g),
                                       tape.param(m.store, ls.ln2_b));
    Tape::Var f1 = tape.relu(tape.add_rowvec(tape.matmul(f, tape.param(m.store, ls.ffn_w1)),
                                             tape.param(m.store, ls.ffn_b1)));
    Tape::Var f2 = tape.add_rowvec(tape.matmul(f1, tape.param(m.store, ls.ffn_w2)),
                                   tape.param(m.store, ls.ffn_b2));
    f2 = tape.dropout(f2, m.cfg.dropout, dropout_rng, train);
    x = tape.add(x, f2);
  }

  Tape::Var seed_row = tape.slice_rows(x, seed_index, seed_index + 1);
  Tape::Var ctx_mean = tape.mean_rows(x);
  return tape.add(tape.scale_by(seed_row, tape.param(m.store, m.slots.pool_w_seed)),
                  tape.scale_by(ctx_mean, tape.param(m.store, m.slots.pool_w_ctx)));
}

Tape::Var global_forward(Tape& tape, const Model& m, Tape::Var h_local) {
  const int d = m.cfg.tok.d;
  if (m.cfg.no_global || !m.centroids.initialized)
    return tape.constant(Tensor::zeros(1, d));
  Tape::Var c = tape.constant(m.centroids.c);  // stop-gradient by construction
  Tape::Var q = tape.matmul(h_local, tape.param(m.store, m.slots.global_wq));
  Tape::Var kc = tape.matmul(c, tape.param(m.store, m.slots.global_wk));
  Tape::Var vc = tape.matmul(c, tape.param(m.store, m.slots.global_wv));
  Tape::Var scores =
      tape.scale(tape.matmul(q, tape.transpose(kc)), 1.0 / std::sqrt(static_cast<double>(d)));
  return tape.matmul(tape.softmax_rows(scores), vc);
}

Tape::Var output_forward(Tape& tape, const Model& m, Tape::Var h_local, Tape::Var h_global) {
  Tape::Var cat = tape.concat_cols(std::array{h_local, h_global});
  Tape::Var z = tape.relu(tape.add_rowvec(tape.matmul(cat, tape.param(m.store, m.slots.out_w1)),
                                          tape.param(m.store, m.slots.out_b1)));
  return tape.add_rowvec(tape.matmul(z, tape.param(m.store, m.slots.out_w2)),
                         tape.param(m.store, m.slots.out_b2));
}

Tape::Var head_forward(Tape& tape, const Model& m, Tape::Var h_output) {
  return tape.add_rowvec(tape.matmul(h_output, tape.param(m.store, m.slots.head_w)),
                         tape.param(m.store, m.slots.head_b));
}

ForwardResult model_forward(Tape& tape, const Model& m, const SampledContext& ctx,
                            const EncodeInputs& in, bool train, Rng& pe_rng, Rng& dropout_rng) {
  TokenEncodeResult tok = encode_tokens(tape, ctx, in, m.tok, m.store, pe_rng);
  Tape::Var h_local = local_forward(tape, m, tok.h_token, ctx.seed_index, train, dropout_rng);
  Tape::Var h_global = global_forward(tape, m, h_local);
  Tape::Var h_output = output_forward(tape, m, h_local, h_global);
  Tape::Var pred = head_forward(tape, m, h_output);

  const Tensor& feat = tape.val(tok.h_feat);
  Tensor seed_feat(1, feat.c);
  for (int64_t j = 0; j < feat.c; ++j) seed_feat.at(0, j) = feat.at(ctx.seed_index, j);
  return {pred, std::move(seed_feat)};
}

}  // namespace relgt
