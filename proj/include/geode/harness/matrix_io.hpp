#pragma once

#include "geode/common.hpp"

#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace geode {

// Comma- or whitespace-delimited numbers, one observation per line. "NaN" or
// an empty field marks a missing entry. A first line with a non-numeric token
// is taken as a header.
DataSet parse_matrix(std::istream& in, const std::string& source = "<stream>");
DataSet read_matrix(const std::string& path);

void write_matrix(std::ostream& out, const RowMatrix& values, const std::vector<std::string>& header = {});
void write_matrix(const std::string& path, const RowMatrix& values, const std::vector<std::string>& header = {});

}  // namespace geode
