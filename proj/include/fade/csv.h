#ifndef FADE_CSV_H_
#define FADE_CSV_H_

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fade::csv {

// Minimal comma-separated reader/writer. Fields are not quoted; every row
// must have the same number of fields as the header.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of `name` in the header, or -1.
  int ColumnIndex(std::string_view name) const;
};

Table Read(const std::string& path, bool has_header = true);
void Write(const std::string& path, const Table& table);

// Strict numeric parse. Rejects empty fields and NA markers.
double ParseDouble(std::string_view field, std::string_view context);

// Shortest round-trippable representation of `value`.
std::string FormatDouble(double value);

// Headerless single-column file of numbers.
std::vector<double> ReadColumn(const std::string& path);
void WriteColumn(const std::string& path, std::span<const double> values);

}  // namespace fade::csv

#endif  // FADE_CSV_H_
