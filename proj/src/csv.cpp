#include "cavenet/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "cavenet/error.hpp"

namespace cavenet {
namespace {

std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header_.size()) {
    throw DataError("csv row has " + std::to_string(row.size()) + " fields, header has " +
                    std::to_string(header_.size()));
  }
  rows_.push_back(std::move(row));
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  throw DataError("csv has no column '" + name + "'");
}

const std::string& CsvTable::at(std::size_t row, const std::string& col) const {
  return rows_.at(row).at(column(col));
}

double CsvTable::number(std::size_t row, std::size_t col) const {
  return parse_number(rows_.at(row).at(col));
}

void CsvTable::require_columns(const std::vector<std::string>& names) const {
  for (const auto& n : names) column(n);
}

std::string CsvTable::to_string() const {
  std::ostringstream os;
  auto emit = [&os](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) os << ',';
      os << quote(fields[i]);
    }
    os << '\n';
  };
  emit(header_);
  for (const auto& r : rows_) emit(r);
  return os.str();
}

CsvTable CsvTable::parse(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
      any = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        fields.push_back(std::move(field));
        records.push_back(std::move(fields));
      }
      fields.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (in_quotes) throw DataError("csv: unterminated quoted field");
  if (any || !field.empty()) {
    fields.push_back(std::move(field));
    records.push_back(std::move(fields));
  }
  if (records.empty()) throw DataError("csv: missing header");
  CsvTable table(std::move(records.front()));
  for (std::size_t i = 1; i < records.size(); ++i) table.add_row(std::move(records[i]));
  return table;
}

void CsvTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_string();
  if (!out) throw IoError("failed writing " + path.string());
}

CsvTable CsvTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string format_number(float v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_number(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_number(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError("csv: not a number: '" + s + "'");
  }
  return v;
}

}  // namespace cavenet
