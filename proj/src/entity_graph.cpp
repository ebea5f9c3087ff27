#include "relgt/entity_graph.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

namespace relgt {

static_assert(std::endian::native == std::endian::little, "snapshot format assumes LE host");

bool EntityGraph::has_edge(NodeId a, NodeId b) const {
  const NodeId* begin = adj_neighbor.data() + adj_offsets[a];
  const NodeId* end = adj_neighbor.data() + adj_offsets[a + 1];
  return std::binary_search(begin, end, b);
}

EntityGraph build_graph(const Database& db, const RelationalSchema& schema) {
  EntityGraph g;
  const int n_tables = static_cast<int>(schema.tables.size());
  g.table_offsets.resize(n_tables + 1, 0);
  for (int i = 0; i < n_tables; ++i) {
    g.type_names.push_back(schema.tables[i].name);
    g.table_offsets[i + 1] = g.table_offsets[i] + db.tables[i].row_count;
  }
  g.node_count = g.table_offsets[n_tables];

  g.node_type.resize(g.node_count);
  g.timestamps.resize(g.node_count);
  for (int i = 0; i < n_tables; ++i) {
    const Table& t = db.tables[i];
    for (int64_t r = 0; r < t.row_count; ++r) {
      NodeId v = g.table_offsets[i] + r;
      g.node_type[v] = i;
      g.timestamps[v] = t.timestamps[r];
    }
  }

  // relation ids: fkey columns in schema order
  struct Fk {
    int table;
    int slot;
    int target_table;
  };
  std::vector<Fk> fks;
  for (int i = 0; i < n_tables; ++i) {
    const TableSpec& spec = schema.tables[i];
    for (size_t f = 0; f < spec.foreign_keys.size(); ++f) {
      g.relation_names.push_back(spec.name + "." + spec.foreign_keys[f].column);
      fks.push_back({i, static_cast<int>(f), schema.table_index(spec.foreign_keys[f].target_table)});
    }
  }

  // degree count, then fill; every non-null fkey shows up at both endpoints
  std::vector<int64_t> degree(g.node_count, 0);
  for (const auto& fk : fks) {
    const auto& resolved = db.tables[fk.table].fkeys[fk.slot];
    for (int64_t r = 0; r < static_cast<int64_t>(resolved.size()); ++r) {
      if (resolved[r] < 0) continue;
      NodeId child = g.table_offsets[fk.table] + r;
      NodeId parent = g.table_offsets[fk.target_table] + resolved[r];
      ++degree[child];
      ++degree[parent];
      ++g.edge_count;
    }
  }
  g.adj_offsets.resize(g.node_count + 1, 0);
  std::partial_sum(degree.begin(), degree.end(), g.adj_offsets.begin() + 1);
  g.adj_neighbor.resize(g.adj_offsets[g.node_count]);
  g.adj_relation.resize(g.adj_offsets[g.node_count]);

  std::vector<int64_t> cursor(g.adj_offsets.begin(), g.adj_offsets.end() - 1);
  int32_t rel = 0;
  for (const auto& fk : fks) {
    const auto& resolved = db.tables[fk.table].fkeys[fk.slot];
    for (int64_t r = 0; r < static_cast<int64_t>(resolved.size()); ++r) {
      if (resolved[r] < 0) continue;
      NodeId child = g.table_offsets[fk.table] + r;
      NodeId parent = g.table_offsets[fk.target_table] + resolved[r];
      g.adj_neighbor[cursor[child]] = parent;
      g.adj_relation[cursor[child]++] = rel;
      g.adj_neighbor[cursor[parent]] = child;
      g.adj_relation[cursor[parent]++] = rel;
    }
    ++rel;
  }

  // sort each segment by (neighbor, relation) for determinism and O(log) probes
  for (NodeId v = 0; v < g.node_count; ++v) {
    int64_t lo = g.adj_offsets[v], hi = g.adj_offsets[v + 1];
    std::vector<std::pair<NodeId, int32_t>> seg(hi - lo);
    for (int64_t i = lo; i < hi; ++i) seg[i - lo] = {g.adj_neighbor[i], g.adj_relation[i]};
    std::sort(seg.begin(), seg.end());
    for (int64_t i = lo; i < hi; ++i) {
      g.adj_neighbor[i] = seg[i - lo].first;
      g.adj_relation[i] = seg[i - lo].second;
    }
  }
  return g;
}

namespace {

constexpr char kMagic[4] = {'R', 'E', 'G', '1'};
constexpr uint32_t kVersion = 1;

void put_bytes(std::ofstream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
void get_bytes(std::ifstream& in, void* p, size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw IoError("truncated graph snapshot");
}

template <typename T>
void put_pod(std::ofstream& out, T v) {
  put_bytes(out, &v, sizeof(T));
}
template <typename T>
T get_pod(std::ifstream& in) {
  T v;
  get_bytes(in, &v, sizeof(T));
  return v;
}

template <typename T>
void put_vec(std::ofstream& out, const std::vector<T>& v) {
  put_pod<uint64_t>(out, v.size());
  put_bytes(out, v.data(), v.size() * sizeof(T));
}
template <typename T>
std::vector<T> get_vec(std::ifstream& in) {
  auto n = get_pod<uint64_t>(in);
  std::vector<T> v(n);
  get_bytes(in, v.data(), n * sizeof(T));
  return v;
}

void put_strings(std::ofstream& out, const std::vector<std::string>& v) {
  put_pod<uint32_t>(out, static_cast<uint32_t>(v.size()));
  for (const auto& s : v) {
    put_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
    put_bytes(out, s.data(), s.size());
  }
}
std::vector<std::string> get_strings(std::ifstream& in) {
  auto n = get_pod<uint32_t>(in);
  std::vector<std::string> v(n);
  for (auto& s : v) {
    auto len = get_pod<uint32_t>(in);
    s.resize(len);
    get_bytes(in, s.data(), len);
  }
  return v;
}

}  // namespace

void save_graph(const EntityGraph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  put_bytes(out, kMagic, 4);
  put_pod<uint32_t>(out, kVersion);
  put_pod<int64_t>(out, g.node_count);
  put_pod<int64_t>(out, g.edge_count);
  put_strings(out, g.type_names);
  put_strings(out, g.relation_names);
  put_vec(out, g.table_offsets);
  put_vec(out, g.node_type);
  put_vec(out, g.timestamps);
  put_vec(out, g.adj_offsets);
  put_vec(out, g.adj_neighbor);
  put_vec(out, g.adj_relation);
  if (!out) throw IoError("write failed for " + path);
}

EntityGraph load_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  get_bytes(in, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError(path + ": not a REG1 snapshot");
  auto version = get_pod<uint32_t>(in);
  if (version != kVersion)
    throw ParseError(path + ": unsupported snapshot version " + std::to_string(version));
  EntityGraph g;
  g.node_count = get_pod<int64_t>(in);
  g.edge_count = get_pod<int64_t>(in);
  g.type_names = get_strings(in);
  g.relation_names = get_strings(in);
  g.table_offsets = get_vec<int64_t>(in);
  g.node_type = get_vec<int32_t>(in);
  g.timestamps = get_vec<Timestamp>(in);
  g.adj_offsets = get_vec<int64_t>(in);
  g.adj_neighbor = get_vec<NodeId>(in);
  g.adj_relation = get_vec<int32_t>(in);
  return g;
}

bool graphs_equal(const EntityGraph& a, const EntityGraph& b) {
  return a.node_count == b.node_count && a.edge_count == b.edge_count &&
         a.type_names == b.type_names && a.relation_names == b.relation_names &&
         a.table_offsets == b.table_offsets && a.node_type == b.node_type &&
         a.timestamps == b.timestamps && a.adj_offsets == b.adj_offsets &&
         a.adj_neighbor == b.adj_neighbor && a.adj_relation == b.adj_relation;
}

}  // namespace relgt
