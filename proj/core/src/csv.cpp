#include "floodcast/csv.hpp"

#include <charconv>
#include <fstream>
#include <system_error>

#include "floodcast/error.hpp"

namespace floodcast::csv {

std::string format_double(double value) {
  if (value == 0.0) value = 0.0;  // normalize -0
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

double parse_double(std::string_view text, std::string_view context) {
  double value = 0.0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
  if (result.ec != std::errc{} || result.ptr != text.data() + text.size()) {
    raise(Errc::schema_mismatch,
          std::string(context) + ": expected a number, got '" + std::string(text) + "'");
  }
  return value;
}

std::int64_t parse_int(std::string_view text, std::string_view context) {
  std::int64_t value = 0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
  if (result.ec != std::errc{} || result.ptr != text.data() + text.size()) {
    raise(Errc::schema_mismatch,
          std::string(context) + ": expected an integer, got '" + std::string(text) + "'");
  }
  return value;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.emplace_back(line.substr(start));
      break;
    }
    cells.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

Table read_file(const std::filesystem::path& path, std::string_view expected_header) {
  std::ifstream in(path);
  if (!in) {
    raise(Errc::missing_file, "cannot open '" + path.string() + "'");
  }
  Table table;
  std::string line;
  if (!std::getline(in, line)) {
    raise(Errc::schema_mismatch, path.string() + ": empty file, expected header '" +
                                     std::string(expected_header) + "'");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected_header) {
    raise(Errc::schema_mismatch, path.string() + ": header '" + line + "' does not match '" +
                                     std::string(expected_header) + "'");
  }
  table.header = split_line(line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != table.header.size()) {
      raise(Errc::schema_mismatch,
            path.string() + ": row with " + std::to_string(cells.size()) + " cells, expected " +
                std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  return table;
}

Writer::Writer(std::filesystem::path path, std::string_view header)
    : path_(std::move(path)), n_columns_(split_line(std::string(header)).size()) {
  content_.append(header);
  content_.push_back('\n');
}

void Writer::row(const std::vector<std::string>& cells) {
  if (cells.size() != n_columns_) {
    raise(Errc::schema_mismatch, path_.string() + ": writing row with " +
                                     std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(n_columns_));
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) content_.push_back(',');
    content_.append(cells[i]);
  }
  content_.push_back('\n');
}

void Writer::finish() {
  if (finished_) return;
  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  if (!out) {
    raise(Errc::io_failure, "cannot write '" + path_.string() + "'");
  }
  out.write(content_.data(), static_cast<std::streamsize>(content_.size()));
  out.flush();
  if (!out) {
    raise(Errc::io_failure, "write failed for '" + path_.string() + "'");
  }
  finished_ = true;
}

}  // namespace floodcast::csv
