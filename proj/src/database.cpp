#include "relgt/database.hpp"

#include <omp.h>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "relgt/csv.hpp"

namespace relgt {

namespace {

// days-from-civil (Howard Hinnant's algorithm), valid for all i64 in range
int64_t days_from_civil(int64_t y, int64_t m, int64_t d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const int64_t yoe = y - era * 400;
  const int64_t doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

void civil_from_days(int64_t z, int64_t& y, int64_t& m, int64_t& d) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const int64_t doe = z - era * 146097;
  const int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = yoe + era * 400;
  const int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const int64_t mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y += m <= 2;
}

bool parse_int_strict(const std::string& s, int64_t& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  long long v = std::strtoll(s.c_str(), &end, 10);
  if (errno != 0 || end != s.c_str() + s.size()) return false;
  out = v;
  return true;
}

}  // namespace

Timestamp parse_timestamp(const std::string& s) {
  int64_t raw;
  if (parse_int_strict(s, raw)) return raw;
  // ISO-8601: YYYY-MM-DD or YYYY-MM-DDTHH:MM:SS with optional trailing Z
  int y, mo, d, h = 0, mi = 0, se = 0;
  char tz = 0;
  int n = std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d%c", &y, &mo, &d, &h, &mi, &se, &tz);
  if (n != 6 && n != 7) {
    n = std::sscanf(s.c_str(), "%d-%d-%d", &y, &mo, &d);
    if (n != 3) throw ParseError("bad timestamp '" + s + "'");
    h = mi = se = 0;
  } else if (n == 7 && tz != 'Z') {
    throw ParseError("bad timestamp '" + s + "'");
  }
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 || se < 0 ||
      se > 60)
    throw ParseError("bad timestamp '" + s + "'");
  return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + se;
}

std::string format_timestamp(Timestamp t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%" PRId64, t);
  return buf;
}

namespace {

Table load_table(const TableSpec& spec, const std::string& dir) {
  CsvTable csv = read_csv(dir + "/" + spec.name + ".csv");
  Table t;
  t.name = spec.name;
  t.row_count = static_cast<int64_t>(csv.rows.size());

  auto need_column = [&](const std::string& col) {
    int idx = csv.column_index(col);
    if (idx < 0)
      throw SchemaError("table '" + spec.name + "' is missing column '" + col + "'");
    return idx;
  };

  const int pk_idx = need_column(spec.primary_key);
  t.pkey.reserve(csv.rows.size());
  for (size_t r = 0; r < csv.rows.size(); ++r) {
    const std::string& key = csv.rows[r][pk_idx];
    if (key.empty())
      throw DuplicateKeyError("table '" + spec.name + "' row " + std::to_string(r) +
                              " has an empty primary key");
    auto [it, inserted] = t.pkey_index.emplace(key, static_cast<int64_t>(r));
    if (!inserted)
      throw DuplicateKeyError("duplicate primary key '" + key + "' in table '" + spec.name +
                              "' (rows " + std::to_string(it->second) + " and " +
                              std::to_string(r) + ")");
    t.pkey.push_back(key);
  }

  t.has_timestamp = spec.timestamp_column.has_value();
  t.timestamps.assign(csv.rows.size(), kNoTimestamp);
  if (t.has_timestamp) {
    const int ts_idx = need_column(*spec.timestamp_column);
    for (size_t r = 0; r < csv.rows.size(); ++r) {
      const std::string& v = csv.rows[r][ts_idx];
      if (!v.empty()) t.timestamps[r] = parse_timestamp(v);
    }
  }

  for (const auto& col : spec.columns) {
    const int c_idx = need_column(col.name);
    Column c;
    c.kind = col.kind;
    switch (col.kind) {
      case ColumnKind::Numeric: {
        c.numeric.resize(csv.rows.size(), 0.0);
        c.numeric_missing.resize(csv.rows.size(), 0);
        for (size_t r = 0; r < csv.rows.size(); ++r) {
          const std::string& v = csv.rows[r][c_idx];
          char* end = nullptr;
          double d = v.empty() ? 0.0 : std::strtod(v.c_str(), &end);
          if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d)) {
            c.numeric_missing[r] = 1;
          } else {
            c.numeric[r] = d;
          }
        }
        break;
      }
      case ColumnKind::Categorical: {
        c.codes.resize(csv.rows.size(), 0);
        c.dictionary.push_back("");  // reserved null/unseen
        std::unordered_map<std::string, int32_t> dict_index;
        for (size_t r = 0; r < csv.rows.size(); ++r) {
          const std::string& v = csv.rows[r][c_idx];
          if (v.empty()) continue;
          auto [it, inserted] =
              dict_index.emplace(v, static_cast<int32_t>(c.dictionary.size()));
          if (inserted) c.dictionary.push_back(v);
          c.codes[r] = it->second;
        }
        break;
      }
      case ColumnKind::Text: {
        c.text.reserve(csv.rows.size());
        for (size_t r = 0; r < csv.rows.size(); ++r) c.text.push_back(csv.rows[r][c_idx]);
        break;
      }
    }
    t.columns.push_back(std::move(c));
  }

  // raw fkey strings kept aside for the resolution pass
  t.fkeys.resize(spec.foreign_keys.size());
  return t;
}

}  // namespace

Database load_database(const RelationalSchema& schema, const std::string& dir) {
  Database db;
  db.schema = schema;
  db.tables.resize(schema.tables.size());

  const int n = static_cast<int>(schema.tables.size());
  std::vector<std::string> errors(n);
  std::vector<CsvTable> raw(n);

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      db.tables[i] = load_table(schema.tables[i], dir);
      raw[i] = read_csv(dir + "/" + schema.tables[i].name + ".csv");
    } catch (const DomainError& e) {
      errors[i] = std::string(e.kind()) + "|" + e.what();
    }
  }
  for (int i = 0; i < n; ++i) {
    if (errors[i].empty()) continue;
    auto sep = errors[i].find('|');
    std::string kind = errors[i].substr(0, sep), msg = errors[i].substr(sep + 1);
    if (kind == "DuplicateKeyError") throw DuplicateKeyError(msg);
    if (kind == "SchemaError") throw SchemaError(msg);
    if (kind == "ParseError") throw ParseError(msg);
    throw IoError(msg);
  }

  // fkey resolution after all pkey maps exist
  std::vector<std::string> unresolved;
  for (int i = 0; i < n; ++i) {
    const TableSpec& spec = schema.tables[i];
    Table& t = db.tables[i];
    for (size_t f = 0; f < spec.foreign_keys.size(); ++f) {
      const auto& fk = spec.foreign_keys[f];
      int fk_idx = raw[i].column_index(fk.column);
      if (fk_idx < 0)
        throw SchemaError("table '" + spec.name + "' is missing column '" + fk.column + "'");
      const Table& target = db.table(fk.target_table);
      auto& resolved = t.fkeys[f];
      resolved.assign(t.row_count, -1);
      for (int64_t r = 0; r < t.row_count; ++r) {
        const std::string& v = raw[i].rows[r][fk_idx];
        if (v.empty()) continue;  // null fkey, no edge
        auto it = target.pkey_index.find(v);
        if (it == target.pkey_index.end()) {
          std::ostringstream os;
          os << spec.name << " row " << r << " column " << fk.column << " value '" << v << "'";
          unresolved.push_back(os.str());
        } else {
          resolved[r] = it->second;
        }
      }
    }
  }
  if (!unresolved.empty()) {
    std::ostringstream os;
    os << unresolved.size() << " unresolved foreign key(s): ";
    for (size_t i = 0; i < unresolved.size(); ++i) {
      if (i) os << "; ";
      os << unresolved[i];
    }
    throw IntegrityError(os.str());
  }
  return db;
}

void save_database(const Database& db, const std::string& dir) {
  for (size_t i = 0; i < db.tables.size(); ++i) {
    const TableSpec& spec = db.schema.tables[i];
    const Table& t = db.tables[i];
    CsvTable csv;
    csv.header.push_back(spec.primary_key);
    for (const auto& fk : spec.foreign_keys) csv.header.push_back(fk.column);
    if (spec.timestamp_column) csv.header.push_back(*spec.timestamp_column);
    for (const auto& c : spec.columns) csv.header.push_back(c.name);

    csv.rows.resize(t.row_count);
    for (int64_t r = 0; r < t.row_count; ++r) {
      auto& row = csv.rows[r];
      row.push_back(t.pkey[r]);
      for (size_t f = 0; f < t.fkeys.size(); ++f) {
        int64_t tr = t.fkeys[f][r];
        row.push_back(tr < 0 ? "" : db.table(spec.foreign_keys[f].target_table).pkey[tr]);
      }
      if (spec.timestamp_column)
        row.push_back(t.timestamps[r] == kNoTimestamp ? "" : format_timestamp(t.timestamps[r]));
      for (size_t c = 0; c < t.columns.size(); ++c) {
        const Column& col = t.columns[c];
        switch (col.kind) {
          case ColumnKind::Numeric:
            if (col.numeric_missing[r]) {
              row.push_back("");
            } else {
              char buf[40];
              std::snprintf(buf, sizeof(buf), "%.17g", col.numeric[r]);
              row.push_back(buf);
            }
            break;
          case ColumnKind::Categorical:
            row.push_back(col.dictionary[col.codes[r]]);
            break;
          case ColumnKind::Text:
            row.push_back(col.text[r]);
            break;
        }
      }
    }
    write_csv(dir + "/" + spec.name + ".csv", csv);
  }
}

DatabaseStats column_statistics(const Database& db, Timestamp split_cutoff) {
  RELGT_CHECK(split_cutoff != kNoTimestamp, "cutoff must be finite");
  DatabaseStats stats;
  stats.tables.resize(db.tables.size());
  for (size_t i = 0; i < db.tables.size(); ++i) {
    const Table& t = db.tables[i];
    auto& ts = stats.tables[i];
    ts.per_column.resize(t.columns.size());
    for (size_t c = 0; c < t.columns.size(); ++c) {
      const Column& col = t.columns[c];
      if (col.kind != ColumnKind::Numeric) continue;
      double sum = 0.0;
      int64_t n = 0;
      for (int64_t r = 0; r < t.row_count; ++r) {
        if (col.numeric_missing[r]) continue;
        if (t.timestamps[r] != kNoTimestamp && t.timestamps[r] > split_cutoff) continue;
        sum += col.numeric[r];
        ++n;
      }
      ColumnStats cs;
      if (n > 0) {
        cs.mean = sum / n;
        double ss = 0.0;
        for (int64_t r = 0; r < t.row_count; ++r) {
          if (col.numeric_missing[r]) continue;
          if (t.timestamps[r] != kNoTimestamp && t.timestamps[r] > split_cutoff) continue;
          double d = col.numeric[r] - cs.mean;
          ss += d * d;
        }
        double std = std::sqrt(ss / n);
        cs.std = std < 1e-12 ? 1.0 : std;
      }
      ts.per_column[c] = cs;
    }
  }
  return stats;
}

bool database_contents_equal(const Database& a, const Database& b) {
  if (a.tables.size() != b.tables.size()) return false;
  for (size_t i = 0; i < a.tables.size(); ++i) {
    const Table& x = a.tables[i];
    const Table& y = b.tables[i];
    if (x.name != y.name || x.row_count != y.row_count) return false;
    if (x.pkey != y.pkey || x.fkeys != y.fkeys || x.timestamps != y.timestamps) return false;
    if (x.columns.size() != y.columns.size()) return false;
    for (size_t c = 0; c < x.columns.size(); ++c) {
      const Column& p = x.columns[c];
      const Column& q = y.columns[c];
      if (p.kind != q.kind) return false;
      if (p.numeric != q.numeric || p.numeric_missing != q.numeric_missing) return false;
      if (p.codes != q.codes || p.dictionary != q.dictionary) return false;
      if (p.text != q.text) return false;
    }
  }
  return true;
}

}  // namespace relgt
