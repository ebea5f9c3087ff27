#pragma once

#include <string>
#include <vector>

namespace relgt {

// RFC-4180 table: header row + records. An empty field means "missing".
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column_index(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text, const std::string& origin);

// Fields are quoted only when needed (comma, quote, CR/LF).
void write_csv(const std::string& path, const CsvTable& table);
std::string format_csv(const CsvTable& table);

}  // namespace relgt
