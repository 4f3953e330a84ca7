#pragma once

#include <string>
#include <vector>

#include "diffggm/core.hpp"

namespace diffggm::cli {

/// A numeric table read from delimited text, rows = samples.
struct Table {
  Matrix values;
  std::vector<std::string> names;  // column names; generated when there is no header
  bool had_header = false;
};

/**
 * Parse comma- or whitespace-delimited text. Blank lines are skipped. The first
 * non-blank line is a header when any of its fields is not a number. Errors
 * are Data errors carrying "source:line:column".
 */
Table parse_table(const std::string& text, const std::string& source);
Table read_table(const std::string& path);

/// Comma-separated, %.17g, optional header line.
std::string format_table(const Matrix& values, const std::vector<std::string>& header = {});

/// Write text to path, throwing a Data error with the path on failure.
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

std::string format_double(double value);

}  // namespace diffggm::cli
