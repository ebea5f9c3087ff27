#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "relgt/common.hpp"
#include "relgt/schema.hpp"

namespace relgt {

// One attribute column. Only the members matching `kind` are populated.
struct Column {
  ColumnKind kind;
  std::vector<double> numeric;
  std::vector<uint8_t> numeric_missing;
  std::vector<int32_t> codes;            // 0 = reserved null/unseen code
  std::vector<std::string> dictionary;   // dictionary[0] == "" (reserved)
  std::vector<std::string> text;         // empty string = missing
};

struct Table {
  std::string name;
  int64_t row_count = 0;
  std::vector<std::string> pkey;                         // original key strings
  std::unordered_map<std::string, int64_t> pkey_index;   // key -> row
  // per foreign key (aligned with TableSpec::foreign_keys): target row, -1 = null
  std::vector<std::vector<int64_t>> fkeys;
  std::vector<Timestamp> timestamps;                     // kNoTimestamp where absent
  bool has_timestamp = false;
  std::vector<Column> columns;                           // aligned with TableSpec::columns
};

struct Database {
  RelationalSchema schema;
  std::vector<Table> tables;

  const Table& table(const std::string& name) const {
    return tables[static_cast<size_t>(schema.table_index(name))];
  }
};

// Expects one `<table>.csv` per schema table under `dir`.
Database load_database(const RelationalSchema& schema, const std::string& dir);

// Writes `<table>.csv` files back; numeric values use 17 significant digits
// so a reload reproduces bit-identical column contents.
void save_database(const Database& db, const std::string& dir);

// Timestamp literals: raw integer seconds or ISO-8601
// (YYYY-MM-DD[THH:MM:SS[Z]]).
Timestamp parse_timestamp(const std::string& s);
std::string format_timestamp(Timestamp t);

struct ColumnStats {
  double mean = 0.0;
  double std = 1.0;
};

struct TableStats {
  std::vector<ColumnStats> per_column;  // aligned with Table::columns
};

struct DatabaseStats {
  std::vector<TableStats> tables;
};

// Mean/population-std of numeric columns over rows with timestamp <= cutoff
// or no timestamp. Constant or empty selections get std 1.0.
DatabaseStats column_statistics(const Database& db, Timestamp split_cutoff);

bool database_contents_equal(const Database& a, const Database& b);

}  // namespace relgt
