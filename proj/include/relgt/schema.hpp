#pragma once

#include <optional>
#include <string>
#include <vector>

namespace relgt {

enum class ColumnKind { Numeric, Categorical, Text };

const char* to_string(ColumnKind k);
ColumnKind column_kind_from_string(const std::string& s);

struct ColumnSpec {
  std::string name;
  ColumnKind kind;
};

struct ForeignKeySpec {
  std::string column;
  std::string target_table;
};

struct TableSpec {
  std::string name;
  std::string primary_key;
  std::vector<ForeignKeySpec> foreign_keys;
  std::optional<std::string> timestamp_column;
  std::vector<ColumnSpec> columns;  // attribute columns (keys/timestamp excluded)
};

struct RelationalSchema {
  std::vector<TableSpec> tables;

  int table_index(const std::string& name) const;  // -1 if absent
  const TableSpec& table(const std::string& name) const;
  // Relation ids are assigned to fkey columns in schema order; the id is
  // stable across the whole graph.
  int relation_count() const;
};

RelationalSchema load_schema(const std::string& manifest_path);
RelationalSchema parse_schema(const std::string& json_text, const std::string& origin);
void validate_schema(const RelationalSchema& schema);
std::string format_schema(const RelationalSchema& schema);
void save_schema(const RelationalSchema& schema, const std::string& path);

}  // namespace relgt
