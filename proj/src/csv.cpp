#include "bcm/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "bcm/errors.hpp"

namespace bcm {

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw SchemaError("csv: missing column '" + name + "'");
}

std::string CsvTable::comment_value(const std::string& key) const {
  const std::string prefix = key + "=";
  for (const auto& c : comments) {
    if (c.rfind(prefix, 0) == 0) return c.substr(prefix.size());
  }
  return {};
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot open csv '" + file.string() + "'");
  CsvTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!have_header && line.front() == '#') {
      std::size_t start = 1;
      while (start < line.size() && line[start] == ' ') ++start;
      table.comments.push_back(line.substr(start));
      continue;
    }
    if (!have_header) {
      table.header = split(line);
      have_header = true;
      continue;
    }
    auto fields = split(line);
    if (fields.size() != table.header.size()) {
      throw FormatError("csv '" + file.string() + "': row has " + std::to_string(fields.size()) + " fields, header has " +
                        std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) throw EmptyInput("csv '" + file.string() + "' is empty");
  return table;
}

CsvWriter::CsvWriter(const std::filesystem::path& file, std::vector<std::string> header,
                     const std::vector<std::string>& comments)
    : file_(file), width_(header.size()) {
  if (std::filesystem::exists(file_)) return;
  std::ofstream out(file_);
  if (!out) throw FormatError("cannot open '" + file_.string() + "' for writing");
  for (const auto& c : comments) out << "# " << c << '\n';
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != width_) throw InvalidInput("csv row width does not match header");
  std::ofstream out(file_, std::ios::app);
  if (!out) throw FormatError("cannot append to '" + file_.string() + "'");
  for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << fields[i];
  out << '\n';
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace bcm
