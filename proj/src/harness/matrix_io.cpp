#include "geode/harness/matrix_io.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace geode {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  if (line.find(',') != std::string::npos) {
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    if (!line.empty() && line.back() == ',') fields.emplace_back();
  } else {
    std::istringstream ss(line);
    std::string field;
    while (ss >> field) fields.push_back(field);
  }
  return fields;
}

bool is_missing_token(const std::string& t) {
  return t.empty() || t == "NaN" || t == "nan" || t == "NA" || t == "NAN";
}

bool parse_number(const std::string& t, double& out) {
  if (is_missing_token(t)) {
    out = std::numeric_limits<double>::quiet_NaN();
    return true;
  }
  errno = 0;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && errno != ERANGE;
}

}  // namespace

DataSet parse_matrix(std::istream& in, const std::string& source) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    std::vector<double> values(fields.size());
    bool numeric = true;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (!parse_number(fields[c], values[c])) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        width = fields.size();
        continue;
      }
      throw Error(ErrorKind::FormatError, source + ":" + std::to_string(line_no) + ": non-numeric field");
    }
    if (width == 0) width = values.size();
    if (values.size() != width) {
      throw Error(ErrorKind::FormatError, source + ":" + std::to_string(line_no) + ": expected " +
                                              std::to_string(width) + " fields, found " + std::to_string(values.size()));
    }
    bool any_observed = false;
    for (double v : values) any_observed = any_observed || !std::isnan(v);
    if (!any_observed) {
      throw Error(ErrorKind::FormatError, source + ":" + std::to_string(line_no) + ": row has no observed entry");
    }
    first = false;
    rows.push_back(std::move(values));
  }
  RowMatrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.empty() ? width : rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return DataSet(std::move(m));
}

DataSet read_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  return parse_matrix(in, path);
}

void write_matrix(std::ostream& out, const RowMatrix& values, const std::vector<std::string>& header) {
  if (!header.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
  }
  out << std::setprecision(17);
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      if (j) out << ',';
      if (std::isnan(values(i, j))) {
        out << "NaN";
      } else {
        out << values(i, j);
      }
    }
    out << '\n';
  }
}

void write_matrix(const std::string& path, const RowMatrix& values, const std::vector<std::string>& header) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  write_matrix(out, values, header);
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path);
}

}  // namespace geode
