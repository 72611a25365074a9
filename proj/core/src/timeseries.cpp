#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include "dpmlds/errors.hpp"
#include "dpmlds/experiment.hpp"

namespace dpmlds {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    const auto b = field.find_first_not_of(" \t");
    const auto e = field.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_index(const std::string& s, long long& out) {
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::string where(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line) + ": ";
}

/// Lines of the file without trailing carriage returns; trailing blank
/// lines dropped.
std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().find_first_not_of(" \t") == std::string::npos) {
    lines.pop_back();
  }
  if (!lines.empty() && lines.front().rfind("\xEF\xBB\xBF", 0) == 0) lines.front().erase(0, 3);
  return lines;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

Series load_timeseries(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError(path + ": empty file");
  const auto header = split_fields(lines.front());
  if (header.size() < 2 || header[0] != "t") {
    throw DataError(where(path, 1) + "header must be 't,z1[,z2,...]'");
  }
  for (std::size_t k = 1; k < header.size(); ++k) {
    if (header[k] != "z" + std::to_string(k)) {
      throw DataError(where(path, 1) + "expected column 'z" + std::to_string(k) + "', found '" +
                      header[k] + "'");
    }
  }
  const Index nz = static_cast<Index>(header.size() - 1);
  Series z;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    const auto fields = split_fields(lines[i]);
    long long t = 0;
    if (fields.empty() || !parse_index(fields[0], t)) {
      throw DataError(where(path, lineno) + "malformed row: time index is not an integer");
    }
    const long long expected = static_cast<long long>(z.size()) + 1;
    if (t > expected) {
      throw DataError(where(path, lineno) + "gap in time index: missing t=" +
                      std::to_string(expected));
    }
    if (t < expected) {
      throw DataError(where(path, lineno) + "time index must increase strictly from 1, got t=" +
                      std::to_string(t));
    }
    if (fields.size() != header.size()) {
      throw DataError(where(path, lineno) + "dimension mismatch: expected " +
                      std::to_string(nz) + " values, found " +
                      std::to_string(fields.size() - 1));
    }
    VectorXd row(nz);
    for (Index k = 0; k < nz; ++k) {
      double v = 0.0;
      if (!parse_double(fields[static_cast<std::size_t>(k) + 1], v)) {
        throw DataError(where(path, lineno) + "malformed value '" +
                        fields[static_cast<std::size_t>(k) + 1] + "'");
      }
      row(k) = v;
    }
    z.push_back(std::move(row));
  }
  if (z.empty()) throw DataError(path + ": no observations");
  return z;
}

void write_timeseries(const std::string& path, const Series& z) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  const Index nz = z.empty() ? 1 : z.front().size();
  out << "t";
  for (Index k = 1; k <= nz; ++k) out << ",z" << k;
  out << '\n';
  for (std::size_t t = 0; t < z.size(); ++t) {
    out << t + 1;
    for (Index k = 0; k < z[t].size(); ++k) out << ',' << format_double(z[t](k));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] == name) return k;
  }
  throw DataError("missing column '" + name + "'");
}

CsvTable read_csv_table(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError(path + ": empty file");
  CsvTable table;
  table.header = split_fields(lines.front());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split_fields(lines[i]);
    if (fields.size() != table.header.size()) {
      throw DataError(where(path, i + 1) + "expected " + std::to_string(table.header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> row;
    for (const auto& f : fields) {
      double v = 0.0;
      if (!parse_double(f, v)) throw DataError(where(path, i + 1) + "malformed value '" + f + "'");
      row.push_back(v);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace dpmlds
