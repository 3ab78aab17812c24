#pragma once

// Column tables written as CSV (with an optional '#' metadata line) or JSON.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridgfv/error.hpp"

namespace gridgfv::cli {

using Cell = std::variant<double, std::int64_t, std::string>;

struct Table {
  std::vector<std::pair<std::string, Cell>> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

inline std::string format_number(double v) {
  if (!std::isfinite(v)) throw NumericalError("refusing to write a non-finite value to output");
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_cell(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  const auto& s = std::get<std::string>(c);
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

inline void write_csv(std::ostream& os, const Table& t) {
  if (!t.meta.empty()) {
    os << "#";
    for (std::size_t i = 0; i < t.meta.size(); ++i)
      os << (i ? "," : " ") << t.meta[i].first << "=" << format_cell(t.meta[i].second);
    os << "\n";
  }
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << format_cell(t.columns[i]);
  os << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_cell(row[i]);
    os << "\n";
  }
}

inline nlohmann::json cell_json(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) {
    if (!std::isfinite(*d)) throw NumericalError("refusing to write a non-finite value to output");
    return *d;
  }
  if (const auto* i = std::get_if<std::int64_t>(&c)) return *i;
  return std::get<std::string>(c);
}

inline nlohmann::json table_json(const Table& t) {
  nlohmann::json j;
  j["meta"] = nlohmann::json::object();
  for (const auto& [k, v] : t.meta) j["meta"][k] = cell_json(v);
  j["columns"] = t.columns;
  auto& rows = j["rows"] = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& c : row) r.push_back(cell_json(c));
    rows.push_back(std::move(r));
  }
  return j;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open output file: " + path);
  f << content;
  if (!f) throw DataError("failed writing output file: " + path);
}

inline std::string json_path_for(const std::string& csv_path) {
  auto dot = csv_path.find_last_of('.');
  auto slash = csv_path.find_last_of('/');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash))
    return csv_path.substr(0, dot) + ".json";
  return csv_path + ".json";
}

}  // namespace gridgfv::cli
