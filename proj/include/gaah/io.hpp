#pragma once

// Result files. Every file starts with one "# meta: {json}" line; CSV data
// follows with a header row. Numbers are printed with %.17g so that
// identical runs give identical bytes.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "gaah/error.hpp"

namespace gaah {

inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  const std::vector<std::string>& columns() const noexcept { return columns_; }
  std::size_t rows() const noexcept { return rows_.size(); }

  /// Cells may be strings or numbers; the count must match the header.
  template <class... Cells>
  void add(const Cells&... cells) {
    static_assert(sizeof...(Cells) > 0);
    if (sizeof...(Cells) != columns_.size())
      throw ParameterError("row has " + std::to_string(sizeof...(Cells)) + " cells, header has " +
                           std::to_string(columns_.size()));
    std::string line;
    bool first = true;
    ((line += (first ? "" : ","), line += cell(cells), first = false), ...);
    rows_.push_back(std::move(line));
  }

  std::string body() const {
    std::string out;
    for (std::size_t c = 0; c < columns_.size(); ++c) out += (c ? "," : "") + columns_[c];
    out += '\n';
    for (const auto& r : rows_) out += r + '\n';
    return out;
  }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double x) { return format_number(x); }
  template <class T>
    requires std::is_integral_v<T>
  static std::string cell(T x) {
    return std::to_string(x);
  }

  std::vector<std::string> columns_;
  std::vector<std::string> rows_;
};

inline std::string meta_line(const nlohmann::json& meta) { return "# meta: " + meta.dump() + "\n"; }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

inline void write_csv(const std::filesystem::path& path, const nlohmann::json& meta, const CsvTable& table) {
  write_text(path, meta_line(meta) + table.body());
}

/// JSON result file: a meta line followed by the pretty-printed document.
inline void write_json(const std::filesystem::path& path, const nlohmann::json& meta, const nlohmann::json& doc) {
  write_text(path, meta_line(meta) + doc.dump(2) + "\n");
}

/// Reads the meta object from the first line of a result file.
inline nlohmann::json read_meta(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line)) throw Error("cannot read '" + path.string() + "'");
  const std::string prefix = "# meta: ";
  if (line.rfind(prefix, 0) != 0) throw Error("'" + path.string() + "' has no meta line");
  return nlohmann::json::parse(line.substr(prefix.size()));
}

}  // namespace gaah
