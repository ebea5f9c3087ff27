#include "relgt/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_map>

namespace relgt {

namespace {

Tensor xavier(int64_t r, int64_t c, Rng& rng) {
  Tensor t(r, c);
  double a = std::sqrt(6.0 / static_cast<double>(r + c));
  for (double& v : t.data) v = rng.uniform(-a, a);
  return t;
}

}  // namespace

TokenizerParams build_tokenizer_params(ParamStore& store, const Database& db,
                                       const TokenizerConfig& cfg, Rng& rng) {
  TokenizerParams tp;
  tp.cfg = cfg;
  const int d = cfg.d;

  tp.column_slots.resize(db.tables.size());
  tp.null_slots.resize(db.tables.size());
  for (size_t t = 0; t < db.tables.size(); ++t) {
    const TableSpec& spec = db.schema.tables[t];
    tp.null_slots[t] = store.add("feat." + spec.name + ".null", xavier(1, d, rng));
    for (size_t c = 0; c < spec.columns.size(); ++c) {
      const ColumnSpec& col = spec.columns[c];
      const std::string base = "feat." + spec.name + "." + col.name;
      int slot = -1;
      switch (col.kind) {
        case ColumnKind::Numeric:
          slot = store.add(base + ".w", xavier(1, d, rng));
          break;
        case ColumnKind::Categorical: {
          int64_t vocab = static_cast<int64_t>(db.tables[t].columns[c].dictionary.size());
          slot = store.add(base + ".embed", xavier(vocab, d, rng));
          break;
        }
        case ColumnKind::Text:
          slot = store.add(base + ".buckets", xavier(cfg.text_buckets, d, rng));
          break;
      }
      tp.column_slots[t].push_back(slot);
    }
  }

  tp.type_slot = store.add("type.embed",
                           xavier(static_cast<int64_t>(db.tables.size()), d, rng));
  tp.hop_slot = store.add("hop.embed", xavier(kHopMax, d, rng));
  tp.time_slot = store.add("time.w", xavier(1, d, rng));
  tp.pe_w1 = store.add("pe.w1", xavier(1, d, rng));
  tp.pe_b1 = store.add("pe.b1", Tensor::zeros(1, d));
  tp.pe_w2 = store.add("pe.w2", xavier(d, d, rng));
  tp.pe_b2 = store.add("pe.b2", Tensor::zeros(1, d));
  tp.combine_slot =
      store.add("combine.O", xavier(static_cast<int64_t>(cfg.mask.element_count()) * d, d, rng));
  return tp;
}

std::vector<int64_t> hash_text_tokens(const std::string& text, int buckets) {
  std::vector<int64_t> out;
  uint64_t h = 1469598103934665603ULL;  // FNV-1a
  bool in_token = false;
  auto flush = [&]() {
    if (in_token) {
      out.push_back(static_cast<int64_t>(h % static_cast<uint64_t>(buckets)));
      h = 1469598103934665603ULL;
      in_token = false;
    }
  };
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      h = (h ^ static_cast<uint64_t>(std::tolower(ch))) * 1099511628211ULL;
      in_token = true;
    } else {
      flush();
    }
  }
  flush();
  return out;
}

FeatureAssembly build_feature_assembly(const SampledContext& ctx, const EncodeInputs& in,
                                       const TokenizerParams& tp) {
  FeatureAssembly fa;
  std::unordered_map<int, int32_t> slot_to_input;
  auto input_of = [&](int slot) -> int32_t {
    auto [it, inserted] = slot_to_input.emplace(slot, static_cast<int32_t>(fa.input_slots.size()));
    if (inserted) fa.input_slots.push_back(slot);
    return it->second;
  };

  const int k = ctx.k();
  for (int j = 0; j < k; ++j) {
    NodeId v = ctx.tokens[j];
    int ti = in.graph.table_of(v);
    int64_t row = in.graph.row_of(v);
    const Table& table = in.db.tables[ti];
    const size_t n_cols = table.columns.size();
    if (n_cols == 0) continue;
    const double s = 1.0 / std::sqrt(static_cast<double>(n_cols));

    for (size_t c = 0; c < n_cols; ++c) {
      const Column& col = table.columns[c];
      const int slot = tp.column_slots[ti][c];
      switch (col.kind) {
        case ColumnKind::Numeric: {
          if (col.numeric_missing[row]) {
            fa.terms.push_back({j, input_of(tp.null_slots[ti]), 0, s});
          } else {
            const ColumnStats& st = in.stats.tables[ti].per_column[c];
            double z = (col.numeric[row] - st.mean) / st.std;
            fa.terms.push_back({j, input_of(slot), 0, z * s});
          }
          break;
        }
        case ColumnKind::Categorical: {
          int32_t code = col.codes[row];
          if (code == 0) {  // reserved null/unseen -> table null embedding
            fa.terms.push_back({j, input_of(tp.null_slots[ti]), 0, s});
          } else {
            fa.terms.push_back({j, input_of(slot), code, s});
          }
          break;
        }
        case ColumnKind::Text: {
          auto tokens = hash_text_tokens(col.text[row], tp.cfg.text_buckets);
          if (tokens.empty()) break;  // empty text contributes zero
          double ts = s / std::sqrt(static_cast<double>(tokens.size()));
          for (int64_t b : tokens) fa.terms.push_back({j, input_of(slot), b, ts});
          break;
        }
      }
    }
  }
  return fa;
}

Tape::Var encode_features(Tape& tape, const FeatureAssembly& fa, const ParamStore& store,
                          int k, int d) {
  std::vector<Tape::Var> inputs;
  inputs.reserve(fa.input_slots.size());
  for (int slot : fa.input_slots) inputs.push_back(tape.param(store, slot));
  return tape.gather_scaled_rows(inputs, k, d, fa.terms);
}

Tape::Var encode_type(Tape& tape, std::span<const int32_t> types, const TokenizerParams& tp,
                      const ParamStore& store) {
  const int64_t n_types = store.entry(tp.type_slot).value.r;
  std::vector<int64_t> idx(types.size());
  for (size_t i = 0; i < types.size(); ++i) {
    RELGT_CHECK(types[i] >= 0 && types[i] < n_types, "type id out of range");
    idx[i] = types[i];
  }
  return tape.lookup_rows(tape.param(store, tp.type_slot), std::move(idx));
}

Tape::Var encode_hop(Tape& tape, std::span<const int8_t> hops, const TokenizerParams& tp,
                     const ParamStore& store) {
  std::vector<int64_t> idx(hops.size());
  for (size_t i = 0; i < hops.size(); ++i) {
    RELGT_CHECK(hops[i] >= 0 && hops[i] < kHopMax, "hop out of range");
    idx[i] = hops[i];
  }
  return tape.lookup_rows(tape.param(store, tp.hop_slot), std::move(idx));
}

Tape::Var encode_time(Tape& tape, std::span<const int64_t> rel_time, const TokenizerParams& tp,
                      const ParamStore& store) {
  const double scale = tp.cfg.time_scale;
  const double clip = tp.cfg.time_clip_units;
  Tensor units(static_cast<int64_t>(rel_time.size()), 1);
  for (size_t i = 0; i < rel_time.size(); ++i)
    units.data[i] = std::clamp(static_cast<double>(rel_time[i]) / scale, -clip, clip);
  return tape.matmul(tape.constant(std::move(units)), tape.param(store, tp.time_slot));
}

Tensor normalized_adjacency(const SampledContext& ctx) {
  const int k = ctx.k();
  Tensor n(k, k);
  for (int i = 0; i < k; ++i) {
    int64_t deg = 1;  // self loop
    for (int j = 0; j < k; ++j) deg += ctx.adj(i, j) ? 1 : 0;
    const double inv = 1.0 / static_cast<double>(deg);
    n.at(i, i) = inv;
    for (int j = 0; j < k; ++j)
      if (ctx.adj(i, j)) n.at(i, j) = inv;
  }
  return n;
}

Tape::Var gnn_pe(Tape& tape, const Tensor& norm_adj, const Tensor& z,
                 const TokenizerParams& tp, const ParamStore& store) {
  RELGT_CHECK(z.r == norm_adj.r && z.c == 1, "PE init must be K x 1");
  Tape::Var n = tape.constant(norm_adj);
  Tape::Var nz = tape.matmul(n, tape.constant(z));
  Tape::Var h1 = tape.relu(tape.add_rowvec(tape.matmul(nz, tape.param(store, tp.pe_w1)),
                                           tape.param(store, tp.pe_b1)));
  return tape.add_rowvec(tape.matmul(tape.matmul(n, h1), tape.param(store, tp.pe_w2)),
                         tape.param(store, tp.pe_b2));
}

Tensor pe_random_init(int k, Rng& rng) {
  Tensor z(k, 1);
  for (double& v : z.data) v = rng.normal();
  return z;
}

Tensor pe_time_init(const SampledContext& ctx, double time_scale) {
  Tensor z(ctx.k(), 1);
  for (int j = 0; j < ctx.k(); ++j)
    z.data[j] = static_cast<double>(ctx.rel_time[j]) / time_scale;
  return z;
}

Tape::Var combine_tokens(Tape& tape, std::span<const Tape::Var> elements,
                         const TokenizerParams& tp, const ParamStore& store) {
  Tape::Var cat = tape.concat_cols(elements);
  Tape::Var o = tape.param(store, tp.combine_slot);
  RELGT_CHECK(tape.val(cat).c == tape.val(o).r,
              "combine width " + tape.val(cat).shape_str() + " does not match O " +
                  tape.val(o).shape_str());
  return tape.matmul(cat, o);
}

TokenEncodeResult encode_tokens(Tape& tape, const SampledContext& ctx, const EncodeInputs& in,
                                const TokenizerParams& tp, const ParamStore& store,
                                Rng& pe_rng) {
  const int k = ctx.k();
  const auto& mask = tp.cfg.mask;

  FeatureAssembly fa = build_feature_assembly(ctx, in, tp);
  Tape::Var h_feat = encode_features(tape, fa, store, k, tp.cfg.d);

  std::vector<int32_t> types(k);
  for (int j = 0; j < k; ++j) types[j] = in.graph.type_of(ctx.tokens[j]);

  std::vector<Tape::Var> elements;
  elements.push_back(h_feat);
  if (mask.type) elements.push_back(encode_type(tape, types, tp, store));
  if (mask.hop) elements.push_back(encode_hop(tape, ctx.hops, tp, store));
  if (mask.stpe) {
    Tensor n = normalized_adjacency(ctx);
    elements.push_back(gnn_pe(tape, n, pe_time_init(ctx, tp.cfg.time_scale), tp, store));
  } else {
    if (mask.time) elements.push_back(encode_time(tape, ctx.rel_time, tp, store));
    if (mask.pe) {
      Tensor n = normalized_adjacency(ctx);
      elements.push_back(gnn_pe(tape, n, pe_random_init(k, pe_rng), tp, store));
    }
  }

  return {combine_tokens(tape, elements, tp, store), h_feat};
}

}  // namespace relgt
