#include "egfr/csv.hpp"

#include <sstream>

namespace egfr {

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return int(i);
  return -1;
}

static std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

CsvTable read_csv(std::istream& in, char delim) {
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto fields = split_line(line, delim);
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      t.rows.push_back(std::move(fields));
    }
  }
  return t;
}

std::string join_csv_row(const std::vector<std::string>& fields, char delim) {
  std::ostringstream os;
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) os << delim;
    os << fields[i];
  }
  os << '\n';
  return os.str();
}

}  // namespace egfr
