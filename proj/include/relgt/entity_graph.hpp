#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relgt/common.hpp"
#include "relgt/database.hpp"

namespace relgt {

// Relational entity graph: one node per table row, one undirected edge per
// non-null foreign key, labeled with the fkey column that created it.
// Node ids are table-major and contiguous, so the node type is a range lookup.
struct EntityGraph {
  int64_t node_count = 0;
  std::vector<std::string> type_names;               // one per table
  std::vector<int64_t> table_offsets;                // size |T|+1
  std::vector<int32_t> node_type;                    // node -> type id
  std::vector<Timestamp> timestamps;                 // kNoTimestamp = static row
  std::vector<std::string> relation_names;           // "<table>.<fkey column>"
  int64_t edge_count = 0;                            // stored pairs (= non-null fkeys)

  // CSR over undirected edges, each segment sorted by (neighbor, relation)
  std::vector<int64_t> adj_offsets;                  // size node_count+1
  std::vector<NodeId> adj_neighbor;
  std::vector<int32_t> adj_relation;

  int32_t type_of(NodeId v) const { return node_type[v]; }
  Timestamp timestamp_of(NodeId v) const { return timestamps[v]; }
  NodeId node_of(int table, int64_t row) const { return table_offsets[table] + row; }
  int table_of(NodeId v) const { return node_type[v]; }
  int64_t row_of(NodeId v) const { return v - table_offsets[node_type[v]]; }
  int64_t degree(NodeId v) const { return adj_offsets[v + 1] - adj_offsets[v]; }

  std::span<const NodeId> neighbors(NodeId v) const {
    RELGT_CHECK(v >= 0 && v < node_count, "node id out of range");
    return {adj_neighbor.data() + adj_offsets[v],
            static_cast<size_t>(adj_offsets[v + 1] - adj_offsets[v])};
  }
  std::span<const int32_t> neighbor_relations(NodeId v) const {
    RELGT_CHECK(v >= 0 && v < node_count, "node id out of range");
    return {adj_relation.data() + adj_offsets[v],
            static_cast<size_t>(adj_offsets[v + 1] - adj_offsets[v])};
  }

  bool has_edge(NodeId a, NodeId b) const;  // binary search in a's segment
};

EntityGraph build_graph(const Database& db, const RelationalSchema& schema);

// Versioned little-endian snapshot ("REG1") for fast reload.
void save_graph(const EntityGraph& g, const std::string& path);
EntityGraph load_graph(const std::string& path);

bool graphs_equal(const EntityGraph& a, const EntityGraph& b);

}  // namespace relgt
