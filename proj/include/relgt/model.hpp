#pragma once

#include <vector>

#include "relgt/tokenizer.hpp"

namespace relgt {

struct ModelConfig {
  TokenizerConfig tok;
  int n_heads = 4;
  int layers = 4;            // L
  double dropout = 0.1;
  int centroids = 64;        // B global tokens
  double centroid_decay = 0.99;
  bool no_global = false;
};

// EMA K-Means state for the global tokens. Centroids are model inputs, not
// parameters: no gradient flows into them.
struct Centroids {
  Tensor c;                        // B x d
  std::vector<double> ema_counts;  // >= 0
  Tensor ema_sums;                 // B x d
  double decay = 0.99;
  bool initialized = false;
};

// Farthest-point selection from the batch features; padded with small
// Gaussian noise when the batch is smaller than B.
void init_centroids(Centroids& cent, const Tensor& feats, int b, double decay, Rng& rng);

// Nearest-centroid assignment, then per-cluster EMA of counts and sums.
// Clusters with no assigned features this batch are left untouched.
void update_centroids(Centroids& cent, const Tensor& feats);

struct LayerSlots {
  int ln1_g, ln1_b;
  int wq, wk, wv, wo;
  int ln2_g, ln2_b;
  int ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct ModelSlots {
  std::vector<LayerSlots> layers;
  int pool_w_seed, pool_w_ctx;
  int global_wq, global_wk, global_wv;
  int out_w1, out_b1, out_w2, out_b2;
  int head_w, head_b;
};

struct Model {
  ModelConfig cfg;
  ParamStore store;
  TokenizerParams tok;
  ModelSlots slots;
  Centroids centroids;
};

Model build_model(const Database& db, const ModelConfig& cfg, uint64_t param_seed);

// L pre-norm self-attention layers over the K tokens, then the learnable
// seed/mean pooling. Returns h_local (1 x d).
Tape::Var local_forward(Tape& tape, const Model& m, Tape::Var h_token, int seed_index,
                        bool train, Rng& dropout_rng);

// Single-head cross-attention from the seed representation to the centroids.
Tape::Var global_forward(Tape& tape, const Model& m, Tape::Var h_local);

Tape::Var output_forward(Tape& tape, const Model& m, Tape::Var h_local, Tape::Var h_global);
Tape::Var head_forward(Tape& tape, const Model& m, Tape::Var h_output);  // 1 x 1

struct ForwardResult {
  Tape::Var prediction;  // scalar logit / regression value
  Tensor seed_feat;      // seed token's h_feat value (off-tape, for centroids)
};

ForwardResult model_forward(Tape& tape, const Model& m, const SampledContext& ctx,
                            const EncodeInputs& in, bool train, Rng& pe_rng, Rng& dropout_rng);

}  // namespace relgt
