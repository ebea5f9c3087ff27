#include "relgt/schema.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "relgt/common.hpp"

namespace relgt {

using nlohmann::json;

const char* to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::Numeric: return "numeric";
    case ColumnKind::Categorical: return "categorical";
    case ColumnKind::Text: return "text";
  }
  return "?";
}

ColumnKind column_kind_from_string(const std::string& s) {
  if (s == "numeric") return ColumnKind::Numeric;
  if (s == "categorical") return ColumnKind::Categorical;
  if (s == "text") return ColumnKind::Text;
  throw ParseError("unknown column kind '" + s + "'");
}

int RelationalSchema::table_index(const std::string& name) const {
  for (size_t i = 0; i < tables.size(); ++i)
    if (tables[i].name == name) return static_cast<int>(i);
  return -1;
}

const TableSpec& RelationalSchema::table(const std::string& name) const {
  int i = table_index(name);
  RELGT_CHECK(i >= 0, "unknown table " + name);
  return tables[i];
}

int RelationalSchema::relation_count() const {
  int n = 0;
  for (const auto& t : tables) n += static_cast<int>(t.foreign_keys.size());
  return n;
}

void validate_schema(const RelationalSchema& schema) {
  if (schema.tables.empty()) throw SchemaError("empty schema");
  std::set<std::string> names;
  for (const auto& t : schema.tables) {
    if (t.name.empty()) throw SchemaError("table with empty name");
    if (!names.insert(t.name).second) throw SchemaError("duplicate table '" + t.name + "'");
  }
  for (const auto& t : schema.tables) {
    if (t.primary_key.empty())
      throw SchemaError("table '" + t.name + "' has no primary key column");
    std::set<std::string> cols;
    for (const auto& c : t.columns) {
      if (!cols.insert(c.name).second)
        throw SchemaError("table '" + t.name + "' declares column '" + c.name + "' twice");
    }
    for (const auto& fk : t.foreign_keys) {
      if (schema.table_index(fk.target_table) < 0)
        throw SchemaError("table '" + t.name + "' foreign key '" + fk.column +
                          "' targets unknown table '" + fk.target_table + "'");
      if (cols.count(fk.column))
        throw SchemaError("table '" + t.name + "' column '" + fk.column +
                          "' is both a foreign key and an attribute column");
    }
    if (t.timestamp_column && cols.count(*t.timestamp_column))
      throw SchemaError("table '" + t.name + "' timestamp column '" + *t.timestamp_column +
                        "' is also an attribute column");
  }
}

RelationalSchema parse_schema(const std::string& json_text, const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  RelationalSchema schema;
  try {
    if (!j.is_object() || !j.contains("tables"))
      throw ParseError(origin + ": manifest must be an object with a 'tables' array");
    for (const auto& jt : j.at("tables")) {
      TableSpec t;
      t.name = jt.at("name").get<std::string>();
      t.primary_key = jt.at("primary_key").get<std::string>();
      if (jt.contains("foreign_keys")) {
        for (const auto& jf : jt.at("foreign_keys")) {
          t.foreign_keys.push_back(
              {jf.at("column").get<std::string>(), jf.at("target_table").get<std::string>()});
        }
      }
      if (jt.contains("timestamp_column") && !jt.at("timestamp_column").is_null())
        t.timestamp_column = jt.at("timestamp_column").get<std::string>();
      if (jt.contains("columns")) {
        for (const auto& jc : jt.at("columns")) {
          t.columns.push_back({jc.at("name").get<std::string>(),
                               column_kind_from_string(jc.at("kind").get<std::string>())});
        }
      }
      schema.tables.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  validate_schema(schema);
  return schema;
}

RelationalSchema load_schema(const std::string& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + manifest_path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_schema(buf.str(), manifest_path);
}

std::string format_schema(const RelationalSchema& schema) {
  json j;
  j["tables"] = json::array();
  for (const auto& t : schema.tables) {
    json jt;
    jt["name"] = t.name;
    jt["primary_key"] = t.primary_key;
    jt["foreign_keys"] = json::array();
    for (const auto& fk : t.foreign_keys)
      jt["foreign_keys"].push_back({{"column", fk.column}, {"target_table", fk.target_table}});
    if (t.timestamp_column)
      jt["timestamp_column"] = *t.timestamp_column;
    else
      jt["timestamp_column"] = nullptr;
    jt["columns"] = json::array();
    for (const auto& c : t.columns)
      jt["columns"].push_back({{"name", c.name}, {"kind", to_string(c.kind)}});
    j["tables"].push_back(std::move(jt));
  }
  return j.dump(2) + "\n";
}

void save_schema(const RelationalSchema& schema, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << format_schema(schema);
}

}  // namespace relgt
