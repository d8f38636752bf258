#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "robcv/cli.hpp"

namespace robcv::cli {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream stream(line);
  std::string field;
  while (std::getline(stream, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  Table table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw InputError(fmt::format("{} line {}: expected {} fields, found {}", path.string(), line_no,
                                   table.header.size(), fields.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const std::string& f = fields[j];
      double value = 0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
      if (f.empty() || ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(value)) {
        throw InputError(fmt::format("{} line {}, column '{}': '{}' is not a finite number",
                                     path.string(), line_no, table.header[j], f));
      }
      row.push_back(value);
    }
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw InputError(path.string() + " is empty");
  return table;
}

Dataset read_dataset(const std::filesystem::path& path) {
  const Table table = read_csv(path);
  if (table.header.size() < 2) throw InputError(path.string() + ": need y and at least one predictor");
  if (table.header.front() != "y") {
    throw InputError(path.string() + ": first column must be 'y', found '" + table.header.front() + "'");
  }
  if (table.rows.size() < 3) throw InputError(path.string() + ": need at least 3 data rows");
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  const auto p = static_cast<Eigen::Index>(table.header.size() - 1);
  Dataset data{Eigen::MatrixXd(n, p), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    data.y[i] = row[0];
    for (Eigen::Index j = 0; j < p; ++j) data.x(i, j) = row[static_cast<std::size_t>(j + 1)];
  }
  return data;
}

std::string format_number(double value) { return fmt::format("{}", value); }

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "y";
  for (Eigen::Index j = 0; j < data.p(); ++j) out << ",x" << j + 1;
  out << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out << format_number(data.y[i]);
    for (Eigen::Index j = 0; j < data.p(); ++j) out << ',' << format_number(data.x(i, j));
    out << '\n';
  }
}

}  // namespace robcv::cli
