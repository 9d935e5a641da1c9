#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace bcm {

/// A small comma-separated table. Lines starting with '#' before the header
/// are kept as comments (without the leading "# ").
struct CsvTable {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index; throws SchemaError naming the column when it is absent.
  std::size_t column(const std::string& name) const;
  /// The value of `key=value` in a comment line, or empty.
  std::string comment_value(const std::string& key) const;
};

/// Plain split on ',' (no quoting; none of the toolkit's fields contain commas).
/// A missing file is a FormatError, a file without a header an EmptyInput.
CsvTable read_csv(const std::filesystem::path& file);

/// Appends rows to a CSV, writing comments and header first when the file is new.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& file, std::vector<std::string> header,
            const std::vector<std::string>& comments = {});
  void row(const std::vector<std::string>& fields);

 private:
  std::filesystem::path file_;
  std::size_t width_;
};

/// Shortest round-trippable decimal text of a double.
std::string format_number(double v);

}  // namespace bcm
