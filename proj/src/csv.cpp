#include "relgt/csv.hpp"

#include <fstream>
#include <sstream>

#include "relgt/common.hpp"

namespace relgt {

int CsvTable::column_index(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable parse_csv(const std::string& text, const std::string& origin) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  size_t i = 0;
  const size_t n = text.size();

  auto end_field = [&]() {
    record.push_back(field);
    field.clear();
    field_was_quoted = false;
  };
  auto end_record = [&]() {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };

  while (i < n) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          field.push_back('"');
          i += 2;
        } else {
          in_quotes = false;
          ++i;
        }
      } else {
        field.push_back(c);
        ++i;
      }
    } else {
      if (c == '"') {
        if (!field.empty() || field_was_quoted)
          throw ParseError(origin + ": stray quote inside unquoted field");
        in_quotes = true;
        field_was_quoted = true;
        ++i;
      } else if (c == ',') {
        end_field();
        ++i;
      } else if (c == '\r') {
        if (i + 1 < n && text[i + 1] == '\n') {
          end_record();
          i += 2;
        } else {
          throw ParseError(origin + ": bare CR");
        }
      } else if (c == '\n') {
        end_record();
        ++i;
      } else {
        field.push_back(c);
        ++i;
      }
    }
  }
  if (in_quotes) throw ParseError(origin + ": unterminated quoted field");
  // final record may lack a trailing newline
  if (!field.empty() || field_was_quoted || !record.empty()) end_record();

  if (records.empty()) throw ParseError(origin + ": missing header row");

  CsvTable t;
  t.header = records[0];
  const size_t width = t.header.size();
  for (size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != width) {
      std::ostringstream os;
      os << origin << ": row " << r << " has " << records[r].size() << " fields, expected "
         << width;
      throw ParseError(os.str());
    }
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), path);
}

static void write_field(std::string& out, const std::string& f) {
  bool need_quotes = f.find_first_of(",\"\r\n") != std::string::npos;
  if (!need_quotes) {
    out += f;
    return;
  }
  out.push_back('"');
  for (char c : f) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

std::string format_csv(const CsvTable& table) {
  std::string out;
  auto write_record = [&](const std::vector<std::string>& rec) {
    for (size_t i = 0; i < rec.size(); ++i) {
      if (i) out.push_back(',');
      write_field(out, rec[i]);
    }
    out.push_back('\n');
  };
  write_record(table.header);
  for (const auto& r : table.rows) write_record(r);
  return out;
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << format_csv(table);
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace relgt
