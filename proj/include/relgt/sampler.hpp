#pragma once

#include <span>
#include <string>
#include <vector>

#include "relgt/common.hpp"
#include "relgt/entity_graph.hpp"
#include "relgt/rng.hpp"

namespace relgt {

// Hop vocabulary: 0 (seed), 1, 2, and a sentinel for random padding tokens.
inline constexpr int kHopFallback = 3;
inline constexpr int kHopMax = 4;

struct SampledContext {
  NodeId seed = -1;
  Timestamp seed_time = kNoTimestamp;
  int seed_index = 0;
  std::vector<NodeId> tokens;       // exactly K entries
  std::vector<int8_t> hops;         // {0,1,2,kHopFallback}
  std::vector<int64_t> rel_time;    // tau(token) - seed_time, 0 if either absent
  std::vector<uint8_t> adjacency;   // K*K, symmetric, zero diagonal

  int k() const { return static_cast<int>(tokens.size()); }
  bool adj(int a, int b) const { return adjacency[static_cast<size_t>(a) * tokens.size() + b] != 0; }
};

// Temporal 2-hop BFS with per-frontier reservoir sampling and random
// admissible fallback padding. A node is admissible when it has no timestamp
// or its timestamp is <= seed_time.
SampledContext sample_context(const EntityGraph& g, NodeId seed, Timestamp seed_time, int k,
                              Rng& rng);

// Uses the seed's own timestamp as the as-of time.
SampledContext sample_context(const EntityGraph& g, NodeId seed, int k, Rng& rng);

struct SeedQuery {
  NodeId node;
  Timestamp as_of;
};

// Batch sampling with one rng stream per seed index, split from master_seed;
// results are identical between the serial and the OpenMP path.
std::vector<SampledContext> sample_batch_serial(const EntityGraph& g,
                                                std::span<const SeedQuery> seeds, int k,
                                                uint64_t master_seed);
std::vector<SampledContext> sample_batch_parallel(const EntityGraph& g,
                                                  std::span<const SeedQuery> seeds, int k,
                                                  uint64_t master_seed);

// Number of (context, token) pairs whose token timestamp lies after the
// context's as-of time. Must be zero for any sampler output.
int64_t leakage_audit(std::span<const SampledContext> contexts, const EntityGraph& g);

std::string context_to_json(const SampledContext& ctx);

}  // namespace relgt
