#pragma once

#include <string>
#include <vector>

namespace twistpf {

// Minimal CSV table. Fields are plain (no quoting); writers must not emit
// commas inside values.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

// Round-trip-exact formatting for doubles.
std::string format_double(double v);

}  // namespace twistpf
