#include "fade/csv.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fade/errors.h"

namespace fade::csv {
namespace {

std::vector<std::string> SplitLine(std::string_view line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  for (auto& field : fields) {
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) {
      field.pop_back();
    }
    size_t first = field.find_first_not_of(" \t");
    field = first == std::string::npos ? std::string() : field.substr(first);
  }
  return fields;
}

}  // namespace

int Table::ColumnIndex(std::string_view name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

Table Read(const std::string& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  Table table;
  std::string line;
  bool first = true;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = SplitLine(line);
    if (first && has_header) {
      table.header = std::move(fields);
      first = false;
      continue;
    }
    first = false;
    size_t expected =
        has_header ? table.header.size()
                   : (table.rows.empty() ? fields.size() : table.rows[0].size());
    if (fields.size() != expected) {
      throw InvalidInput(path + ":" + std::to_string(line_no) + ": expected " +
                         std::to_string(expected) + " fields, got " +
                         std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (has_header && first) throw InvalidInput(path + ": empty file");
  return table;
}

void Write(const std::string& path, const Table& table) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path);
  auto write_row = [&out](const std::vector<std::string>& row) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  };
  if (!table.header.empty()) write_row(table.header);
  for (const auto& row : table.rows) write_row(row);
}

double ParseDouble(std::string_view field, std::string_view context) {
  if (field.empty() || field == "NA" || field == "na" || field == "NaN" ||
      field == "nan" || field == "null") {
    throw InvalidInput("missing value in " + std::string(context));
  }
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw InvalidInput("non-numeric value '" + std::string(field) + "' in " +
                       std::string(context));
  }
  return value;
}

std::string FormatDouble(double value) {
  char buffer[64];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc()) return "nan";
  return std::string(buffer, ptr);
}

std::vector<double> ReadColumn(const std::string& path) {
  Table table = Read(path, /*has_header=*/false);
  std::vector<double> values;
  values.reserve(table.rows.size());
  for (size_t i = 0; i < table.rows.size(); ++i) {
    if (table.rows[i].size() != 1) {
      throw InvalidInput(path + ": expected a single column");
    }
    values.push_back(ParseDouble(table.rows[i][0],
                                 path + " row " + std::to_string(i + 1)));
  }
  return values;
}

void WriteColumn(const std::string& path, std::span<const double> values) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path);
  for (double v : values) out << FormatDouble(v) << '\n';
}

}  // namespace fade::csv
