#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace fmasss::csv {

/// Parsed RFC-4180 document. The first record is the header.
struct Table {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws IngestionError naming the source if missing.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
};

/// Quoted fields, doubled quotes, CRLF or LF line ends, optional UTF-8 BOM.
/// Every record must have as many fields as the header.
Table parse(std::string_view text, const std::string& source = "<memory>");
Table read_file(const std::filesystem::path& path);

double parse_double(const std::string& field, const Table& table, std::size_t row, std::string_view column);

/// Quotes only when the field contains a comma, quote, CR or LF.
std::string escape(std::string_view field);

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
};

}  // namespace fmasss::csv
