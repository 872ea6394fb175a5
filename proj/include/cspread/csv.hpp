// Minimal RFC-4180-ish CSV reading and writing.
#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cspread/core.hpp"

namespace cspread::csv {

using Record = std::vector<std::string>;

// Splits one logical line. Quoted fields may contain commas and doubled quotes;
// embedded newlines are not supported.
inline Record split_line(const std::string& line) {
  Record out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
  return out;
}

struct Table {
  Record header;
  std::vector<Record> rows;

  std::ptrdiff_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
    return -1;
  }
};

inline Table parse(std::istream& in) {
  Table t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!have_header) {
      t.header = split_line(line);
      have_header = true;
      continue;
    }
    auto rec = split_line(line);
    if (rec.size() != t.header.size())
      throw InvalidArgument("CSV row " + std::to_string(t.rows.size() + 2) + " has " + std::to_string(rec.size()) +
                            " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(rec));
  }
  if (!have_header) throw InvalidArgument("CSV input has no header row");
  return t;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return parse(in);
}

inline std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

inline void write_record(std::ostream& out, const Record& rec) {
  for (std::size_t i = 0; i < rec.size(); ++i) {
    if (i) out << ',';
    out << escape(rec[i]);
  }
  out << '\n';
}

}  // namespace cspread::csv
