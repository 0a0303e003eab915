#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace floodcast::csv {

// Shortest round-trip decimal form: load(save(x)) is bit-exact and a second
// save is byte-stable.
std::string format_double(double value);

double parse_double(std::string_view text, std::string_view context);
std::int64_t parse_int(std::string_view text, std::string_view context);

std::vector<std::string> split_line(const std::string& line);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Reads the whole file; header must match `expected_header` exactly
// (SchemaMismatch otherwise, MissingFile if absent).
Table read_file(const std::filesystem::path& path, std::string_view expected_header);

class Writer {
 public:
  Writer(std::filesystem::path path, std::string_view header);
  void row(const std::vector<std::string>& cells);
  // Writes the accumulated content; throws IoFailure on any stream error.
  void finish();

 private:
  std::filesystem::path path_;
  std::string content_;
  std::size_t n_columns_;
  bool finished_ = false;
};

}  // namespace floodcast::csv
