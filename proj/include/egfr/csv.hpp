#pragma once

#include <istream>
#include <string>
#include <vector>

namespace egfr {

// Minimal delimited-text reading. Fields never contain the delimiter in our
// schemas, so no quoting is implemented.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // row numbers are 1-based after header

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(std::istream& in, char delim = ',');

std::string join_csv_row(const std::vector<std::string>& fields, char delim = ',');

}  // namespace egfr
