#include "relgt/sampler.hpp"

#include <omp.h>

#include <algorithm>

#include "json.hpp"

namespace relgt {

namespace {

// Algorithm R. Keeps m uniform draws without replacement from items.
std::vector<NodeId> reservoir_sample(const std::vector<NodeId>& items, size_t m, Rng& rng) {
  if (items.size() <= m) return items;
  std::vector<NodeId> res(items.begin(), items.begin() + m);
  for (size_t i = m; i < items.size(); ++i) {
    uint64_t j = rng.bounded(i + 1);
    if (j < m) res[j] = items[i];
  }
  return res;
}

}  // namespace

SampledContext sample_context(const EntityGraph& g, NodeId seed, Timestamp seed_time, int k,
                              Rng& rng) {
  RELGT_CHECK(k >= 2, "K must be >= 2");
  RELGT_CHECK(seed >= 0 && seed < g.node_count, "seed out of range");
  RELGT_CHECK(seed_time != kNoTimestamp, "seed needs an as-of time");

  auto admissible = [&](NodeId v) {
    Timestamp t = g.timestamp_of(v);
    return t == kNoTimestamp || t <= seed_time;
  };
  if (!admissible(seed)) throw EmptyUniverse("seed is not admissible at its own as-of time");

  SampledContext ctx;
  ctx.seed = seed;
  ctx.seed_time = seed_time;
  ctx.seed_index = 0;
  ctx.tokens.reserve(k);
  ctx.hops.reserve(k);

  std::vector<uint8_t> chosen(g.node_count, 0);
  auto take = [&](NodeId v, int hop) {
    ctx.tokens.push_back(v);
    ctx.hops.push_back(static_cast<int8_t>(hop));
    chosen[v] = 1;
  };
  take(seed, 0);

  // hop-1 frontier: admissible neighbors, CSR order (ascending), deduplicated
  std::vector<NodeId> frontier1;
  for (NodeId u : g.neighbors(seed)) {
    if (u == seed || chosen[u]) continue;
    if (!admissible(u)) continue;
    if (!frontier1.empty() && frontier1.back() == u) continue;  // parallel edge
    frontier1.push_back(u);
  }
  size_t budget = static_cast<size_t>(k) - ctx.tokens.size();
  bool frontier1_truncated = frontier1.size() > budget;
  for (NodeId v : reservoir_sample(frontier1, budget, rng)) take(v, 1);

  // hop-2 frontier, expanded from the full admissible 1-hop set (only relevant
  // when hop 1 was not truncated, otherwise the budget is already spent)
  budget = static_cast<size_t>(k) - ctx.tokens.size();
  if (budget > 0 && !frontier1_truncated) {
    std::vector<uint8_t> seen(g.node_count, 0);
    std::vector<NodeId> frontier2;
    for (NodeId u : frontier1) {
      for (NodeId w : g.neighbors(u)) {
        if (chosen[w] || seen[w]) continue;
        seen[w] = 1;
        if (admissible(w)) frontier2.push_back(w);
      }
    }
    for (NodeId v : reservoir_sample(frontier2, budget, rng)) take(v, 2);
  }

  // fallback padding from the whole admissible universe
  budget = static_cast<size_t>(k) - ctx.tokens.size();
  if (budget > 0) {
    std::vector<NodeId> universe;
    universe.reserve(g.node_count);
    for (NodeId v = 0; v < g.node_count; ++v)
      if (admissible(v)) universe.push_back(v);
    if (universe.empty()) throw EmptyUniverse("no admissible node exists");

    if (universe.size() >= static_cast<size_t>(k)) {
      // enough distinct nodes: rejection-sample unchosen ones
      while (budget > 0) {
        NodeId v = universe[rng.bounded(universe.size())];
        if (chosen[v]) continue;
        take(v, kHopFallback);
        --budget;
      }
    } else {
      // universe smaller than K: exhaust it, then pad with replacement
      for (NodeId v : universe) {
        if (budget == 0) break;
        if (chosen[v]) continue;
        take(v, kHopFallback);
        --budget;
      }
      while (budget > 0) {
        ctx.tokens.push_back(universe[rng.bounded(universe.size())]);
        ctx.hops.push_back(static_cast<int8_t>(kHopFallback));
        --budget;
      }
    }
  }

  ctx.rel_time.resize(k, 0);
  for (int j = 0; j < k; ++j) {
    Timestamp t = g.timestamp_of(ctx.tokens[j]);
    ctx.rel_time[j] = t == kNoTimestamp ? 0 : t - seed_time;
  }

  // induced adjacency by pairwise probe; probe from the smaller CSR segment
  ctx.adjacency.assign(static_cast<size_t>(k) * k, 0);
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      NodeId va = ctx.tokens[a], vb = ctx.tokens[b];
      bool e = g.degree(va) <= g.degree(vb) ? g.has_edge(va, vb) : g.has_edge(vb, va);
      if (e) {
        ctx.adjacency[static_cast<size_t>(a) * k + b] = 1;
        ctx.adjacency[static_cast<size_t>(b) * k + a] = 1;
      }
    }
  }
  return ctx;
}

SampledContext sample_context(const EntityGraph& g, NodeId seed, int k, Rng& rng) {
  Timestamp t = g.timestamp_of(seed);
  RELGT_CHECK(t != kNoTimestamp, "seed has no timestamp; pass an explicit as-of time");
  return sample_context(g, seed, t, k, rng);
}

std::vector<SampledContext> sample_batch_serial(const EntityGraph& g,
                                                std::span<const SeedQuery> seeds, int k,
                                                uint64_t master_seed) {
  std::vector<SampledContext> out(seeds.size());
  for (size_t i = 0; i < seeds.size(); ++i) {
    Rng rng(mix_seed(master_seed, i));
    out[i] = sample_context(g, seeds[i].node, seeds[i].as_of, k, rng);
  }
  return out;
}

std::vector<SampledContext> sample_batch_parallel(const EntityGraph& g,
                                                  std::span<const SeedQuery> seeds, int k,
                                                  uint64_t master_seed) {
  std::vector<SampledContext> out(seeds.size());
  const int64_t n = static_cast<int64_t>(seeds.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (int64_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(master_seed, static_cast<uint64_t>(i)));
    out[i] = sample_context(g, seeds[i].node, seeds[i].as_of, k, rng);
  }
  return out;
}

int64_t leakage_audit(std::span<const SampledContext> contexts, const EntityGraph& g) {
  int64_t violations = 0;
  for (const auto& ctx : contexts) {
    for (NodeId v : ctx.tokens) {
      Timestamp t = g.timestamp_of(v);
      if (t != kNoTimestamp && t > ctx.seed_time) ++violations;
    }
  }
  return violations;
}

std::string context_to_json(const SampledContext& ctx) {
  nlohmann::json j;
  j["seed"] = ctx.seed;
  j["seed_time"] = ctx.seed_time;
  j["k"] = ctx.k();
  j["seed_index"] = ctx.seed_index;
  j["tokens"] = ctx.tokens;
  j["hops"] = ctx.hops;
  j["rel_time"] = ctx.rel_time;
  auto edges = nlohmann::json::array();
  for (int a = 0; a < ctx.k(); ++a)
    for (int b = a + 1; b < ctx.k(); ++b)
      if (ctx.adj(a, b)) edges.push_back({a, b});
  j["edges"] = edges;
  return j.dump();
}

}  // namespace relgt
