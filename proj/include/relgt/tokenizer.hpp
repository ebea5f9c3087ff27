#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relgt/database.hpp"
#include "relgt/entity_graph.hpp"
#include "relgt/sampler.hpp"
#include "relgt/tensor.hpp"

namespace relgt {

// Which token elements are enabled. Element order in the combined token is
// fixed: features, type, hop, time, structure PE. In spatio-temporal mode the
// time element is dropped and the structure PE is initialized from relative
// times instead of random noise (4-element token).
struct TokenElementMask {
  bool type = true;
  bool hop = true;
  bool time = true;
  bool pe = true;
  bool stpe = false;

  int element_count() const {
    if (stpe) return 2 + (type ? 1 : 0) + (hop ? 1 : 0);  // feat + stpe + opt
    return 1 + (type ? 1 : 0) + (hop ? 1 : 0) + (time ? 1 : 0) + (pe ? 1 : 0);
  }
};

struct TokenizerConfig {
  int d = 64;
  int text_buckets = 1 << 14;
  double time_scale = 86400.0;   // seconds per unit (one day)
  double time_clip_units = 365.0;
  TokenElementMask mask;
};

// Parameter slots of all token encoders inside one ParamStore.
struct TokenizerParams {
  TokenizerConfig cfg;
  // per table / per column feature encoders; -1 where the kind has no slot
  std::vector<std::vector<int>> column_slots;
  std::vector<int> null_slots;  // per table
  int type_slot = -1;
  int hop_slot = -1;
  int time_slot = -1;
  int pe_w1 = -1, pe_b1 = -1, pe_w2 = -1, pe_b2 = -1;
  int combine_slot = -1;
};

TokenizerParams build_tokenizer_params(ParamStore& store, const Database& db,
                                       const TokenizerConfig& cfg, Rng& rng);

// Everything a token encoder needs to look at besides the context itself.
struct EncodeInputs {
  const EntityGraph& graph;
  const Database& db;
  const DatabaseStats& stats;
};

// Lowercased alphanumeric tokens hashed into [0, buckets).
std::vector<int64_t> hash_text_tokens(const std::string& text, int buckets);

// Precomputed per-context gather program for the feature encoder.
struct FeatureAssembly {
  std::vector<int> input_slots;
  std::vector<Tape::GatherTerm> terms;
};
FeatureAssembly build_feature_assembly(const SampledContext& ctx, const EncodeInputs& in,
                                       const TokenizerParams& tp);

Tape::Var encode_features(Tape& tape, const FeatureAssembly& fa, const ParamStore& store,
                          int k, int d);
Tape::Var encode_type(Tape& tape, std::span<const int32_t> types, const TokenizerParams& tp,
                      const ParamStore& store);
Tape::Var encode_hop(Tape& tape, std::span<const int8_t> hops, const TokenizerParams& tp,
                     const ParamStore& store);
Tape::Var encode_time(Tape& tape, std::span<const int64_t> rel_time, const TokenizerParams& tp,
                      const ParamStore& store);

// Row-normalized adjacency with self-loops: D^-1 (A + I).
Tensor normalized_adjacency(const SampledContext& ctx);

// Two mean-aggregation layers over the sampled subgraph; z is K x 1.
Tape::Var gnn_pe(Tape& tape, const Tensor& norm_adj, const Tensor& z,
                 const TokenizerParams& tp, const ParamStore& store);

Tensor pe_random_init(int k, Rng& rng);                       // iid standard normal
Tensor pe_time_init(const SampledContext& ctx, double time_scale);  // rel_time / scale

Tape::Var combine_tokens(Tape& tape, std::span<const Tape::Var> elements,
                         const TokenizerParams& tp, const ParamStore& store);

struct TokenEncodeResult {
  Tape::Var h_token;  // K x d
  Tape::Var h_feat;   // K x d (kept for centroid features and ablation tests)
};

// Full tokenizer: five encoders + mixing matrix. pe_rng supplies the random
// PE initialization; pass a stream derived from (eval seed, seed node) for
// deterministic evaluation.
TokenEncodeResult encode_tokens(Tape& tape, const SampledContext& ctx, const EncodeInputs& in,
                                const TokenizerParams& tp, const ParamStore& store,
                                Rng& pe_rng);

}  // namespace relgt
