#include "table_io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace diffggm::cli {

namespace {

struct Field {
  std::string text;
  std::size_t column = 0;  // 1-based character position
};

std::vector<Field> split_line(const std::string& line) {
  std::vector<Field> out;
  const bool comma = line.find(',') != std::string::npos;
  std::size_t i = 0;
  const std::size_t n = line.size();
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
  if (comma) {
    std::size_t start = 0;
    while (true) {
      const std::size_t end = line.find(',', start);
      const std::size_t stop = end == std::string::npos ? n : end;
      std::size_t a = start, b = stop;
      while (a < b && is_space(line[a])) ++a;
      while (b > a && is_space(line[b - 1])) --b;
      out.push_back({line.substr(a, b - a), a + 1});
      if (end == std::string::npos) break;
      start = end + 1;
    }
    return out;
  }
  while (i < n) {
    while (i < n && is_space(line[i])) ++i;
    if (i >= n) break;
    const std::size_t start = i;
    while (i < n && !is_space(line[i])) ++i;
    out.push_back({line.substr(start, i - start), start + 1});
  }
  return out;
}

bool parse_number(const std::string& text, double& value) {
  if (text.empty()) return false;
  errno = 0;
  char* end = nullptr;
  value = std::strtod(text.c_str(), &end);
  return end == text.c_str() + text.size() && errno != ERANGE;
}

std::string location(const std::string& source, std::size_t line, std::size_t column) {
  return source + ":" + std::to_string(line) + ":" + std::to_string(column);
}

}  // namespace

Table parse_table(const std::string& text, const std::string& source) {
  Table table;
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    const std::vector<Field> fields = split_line(line);
    if (fields.empty() || (fields.size() == 1 && fields[0].text.empty())) continue;
    std::vector<double> values(fields.size());
    bool numeric = true;
    for (std::size_t k = 0; k < fields.size() && numeric; ++k) numeric = parse_number(fields[k].text, values[k]);
    if (first && !numeric) {
      for (const Field& f : fields) {
        if (f.text.empty()) throw Error(ErrorKind::Data, location(source, line_no, f.column) + ": empty column name");
        table.names.push_back(f.text);
      }
      table.had_header = true;
      width = fields.size();
      first = false;
      continue;
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      throw Error(ErrorKind::Data, location(source, line_no, 1) + ": expected " + std::to_string(width) +
                                       " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t k = 0; k < fields.size(); ++k) {
      double v = 0.0;
      if (!parse_number(fields[k].text, v)) {
        throw Error(ErrorKind::Data, location(source, line_no, fields[k].column) + ": cannot parse '" +
                                         fields[k].text + "' as a number");
      }
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::Data, location(source, line_no, fields[k].column) + ": non-finite value '" +
                                         fields[k].text + "'");
      }
      values[k] = v;
    }
    rows.push_back(std::move(values));
    first = false;
  }
  if (rows.empty()) throw Error(ErrorKind::Data, source + ": no data rows");
  table.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < width; ++c) table.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  if (!table.had_header) {
    for (std::size_t c = 0; c < width; ++c) table.names.push_back("V" + std::to_string(c));
  }
  return table;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Data, path + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Table read_table(const std::string& path) { return parse_table(read_text(path), path); }

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string format_table(const Matrix& values, const std::vector<std::string>& header) {
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) out += ',';
    out += header[c];
  }
  if (!header.empty()) out += '\n';
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) {
      if (c) out += ',';
      out += format_double(values(r, c));
    }
    out += '\n';
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Data, path + ": cannot open for writing");
  out << text;
  out.flush();
  if (!out) throw Error(ErrorKind::Data, path + ": write failed");
}

}  // namespace diffggm::cli
