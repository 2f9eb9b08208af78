#pragma once

// Plain-text result files: CSV with 17 significant digits, JSON summaries,
// and readers for both.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "abflux/error.hpp"

namespace abflux::io {

using Json = nlohmann::ordered_json;

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw DomainError("CsvTable: no column '" + name + "'");
  }
};

inline void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    out << (i ? "," : "") << table.header[i];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) throw Error("write_csv: ragged row");
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << (i ? "," : "") << format_double(row[i]);
    }
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw Error("read_csv: empty file " + path);
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || end != cell.data() + cell.size()) {
        throw Error("read_csv: bad number '" + cell + "'");
      }
      row.push_back(v);
    }
    if (row.size() != table.header.size()) throw Error("read_csv: ragged row in " + path);
    table.rows.push_back(std::move(row));
  }
  return table;
}

/// JSON number, or null for non-finite values (JSON has no NaN).
inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path);
}

inline Json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return Json::parse(in);
}

}  // namespace abflux::io
