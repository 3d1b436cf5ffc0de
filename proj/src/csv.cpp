#include "apsiv/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include "apsiv/common.hpp"

namespace apsiv {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

[[noreturn]] void cell_error(std::size_t row, const std::string& column, const std::string& what) {
  fail(Errc::ParseError, "row " + std::to_string(row) + ", column '" + column + "': " + what);
}

double parse_double(const std::string& cell, std::size_t row, const std::string& column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || cell.empty())
    cell_error(row, column, "cannot parse '" + cell + "' as a number");
  return value;
}

std::int64_t parse_int(const std::string& cell, std::size_t row, const std::string& column) {
  std::int64_t value = 0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || cell.empty())
    cell_error(row, column, "cannot parse '" + cell + "' as an integer");
  return value;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return j;
  fail(Errc::MissingColumn, "column '" + name + "' not found in header");
}

void fill_default_names(const Dataset& data, CsvSchema* schema) {
  if (schema->continuous.empty())
    for (int j = 1; j <= data.p_cont(); ++j) schema->continuous.push_back("x" + std::to_string(j));
  if (schema->discrete.empty())
    for (int j = 1; j <= data.p_disc(); ++j) schema->discrete.push_back("g" + std::to_string(j));
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

CsvDataset ingest_csv_text(const std::string& text, const CsvSchema& schema) {
  std::vector<std::string> lines;
  {
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t nl = text.find('\n', start);
      if (nl == std::string::npos) nl = text.size();
      std::string line = text.substr(start, nl - start);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) lines.push_back(std::move(line));
      if (nl == text.size()) break;
      start = nl + 1;
    }
  }
  require(!lines.empty(), Errc::ParseError, "empty CSV: no header row");

  const std::vector<std::string> header = split_fields(lines[0]);
  const std::size_t jy = column_index(header, schema.outcome);
  const std::size_t jd = column_index(header, schema.treatment);
  const std::size_t jz = column_index(header, schema.instrument);
  std::vector<std::size_t> jc, jg;
  for (const std::string& name : schema.continuous) jc.push_back(column_index(header, name));
  for (const std::string& name : schema.discrete) jg.push_back(column_index(header, name));
  const bool has_balance = !schema.balance.empty();
  const std::size_t jw = has_balance ? column_index(header, schema.balance) : 0;

  const auto n = static_cast<Eigen::Index>(lines.size() - 1);
  require(n >= 1, Errc::EmptyDataset, "CSV has a header but no data rows");

  CsvDataset out;
  out.data.y.resize(n);
  out.data.d.resize(n);
  out.data.z.resize(n);
  out.data.x_cont.resize(n, static_cast<Eigen::Index>(jc.size()));
  out.data.x_disc.resize(n, static_cast<Eigen::Index>(jg.size()));
  if (has_balance) out.balance.resize(n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t row = static_cast<std::size_t>(i) + 2;  // 1-based, after the header
    const std::vector<std::string> cells = split_fields(lines[static_cast<std::size_t>(i) + 1]);
    if (cells.size() != header.size())
      fail(Errc::ParseError, "row " + std::to_string(row) + ": expected " +
                                 std::to_string(header.size()) + " cells, found " +
                                 std::to_string(cells.size()));
    out.data.y[i] = parse_double(cells[jy], row, schema.outcome);
    out.data.d[i] = parse_double(cells[jd], row, schema.treatment);
    out.data.z[i] = parse_double(cells[jz], row, schema.instrument);
    if (out.data.d[i] != 0.0 && out.data.d[i] != 1.0)
      fail(Errc::NonBinary, "column '" + schema.treatment + "' has value " + cells[jd] +
                                " at row " + std::to_string(row) + " (must be 0 or 1)");
    if (out.data.z[i] != 0.0 && out.data.z[i] != 1.0)
      fail(Errc::NonBinary, "column '" + schema.instrument + "' has value " + cells[jz] +
                                " at row " + std::to_string(row) + " (must be 0 or 1)");
    for (std::size_t k = 0; k < jc.size(); ++k)
      out.data.x_cont(i, static_cast<Eigen::Index>(k)) =
          parse_double(cells[jc[k]], row, schema.continuous[k]);
    for (std::size_t k = 0; k < jg.size(); ++k)
      out.data.x_disc(i, static_cast<Eigen::Index>(k)) =
          parse_int(cells[jg[k]], row, schema.discrete[k]);
    if (has_balance) out.balance[i] = parse_double(cells[jw], row, schema.balance);
  }
  out.data.validate();
  return out;
}

CsvDataset ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::ParseError, "cannot open CSV file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return ingest_csv_text(buf.str(), schema);
}

std::string emit_csv(const Dataset& data, CsvSchema schema) {
  fill_default_names(data, &schema);
  require(static_cast<int>(schema.continuous.size()) == data.p_cont() &&
              static_cast<int>(schema.discrete.size()) == data.p_disc(),
          Errc::DimensionMismatch, "schema covariate names do not match dataset shape");

  std::string out = schema.outcome + "," + schema.treatment + "," + schema.instrument;
  for (const std::string& name : schema.continuous) out += "," + name;
  for (const std::string& name : schema.discrete) out += "," + name;
  out += "\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out += format_double(data.y[i]);
    out += ",";
    out += format_double(data.d[i]);
    out += ",";
    out += format_double(data.z[i]);
    for (Eigen::Index j = 0; j < data.x_cont.cols(); ++j) {
      out += ",";
      out += format_double(data.x_cont(i, j));
    }
    for (Eigen::Index j = 0; j < data.x_disc.cols(); ++j) {
      out += ",";
      out += std::to_string(data.x_disc(i, j));
    }
    out += "\n";
  }
  return out;
}

}  // namespace apsiv
