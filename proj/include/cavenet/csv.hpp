#pragma once

// Small CSV table used for every text artifact (manifests, latents, reports,
// confusion matrices). Fields containing a comma, quote or newline are
// quoted; numbers are written with enough digits to round-trip exactly.

#include <filesystem>
#include <string>
#include <vector>

namespace cavenet {

class CsvTable {
 public:
  CsvTable() = default;
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return rows_.size(); }
  std::size_t cols() const { return header_.size(); }

  void add_row(std::vector<std::string> row);
  const std::vector<std::string>& row(std::size_t i) const { return rows_.at(i); }
  std::size_t column(const std::string& name) const;  // throws DataError
  const std::string& at(std::size_t row, const std::string& col) const;
  double number(std::size_t row, std::size_t col) const;
  void require_columns(const std::vector<std::string>& names) const;

  std::string to_string() const;
  static CsvTable parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static CsvTable load(const std::filesystem::path& path);

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Shortest decimal text that parses back to the same value.
std::string format_number(float v);
std::string format_number(double v);
double parse_number(const std::string& s);

}  // namespace cavenet
