#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace avh {

// RFC 4180 subset: comma separated, double-quote escaping, LF or CRLF rows.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name, if present.
  std::optional<std::size_t> column(std::string_view name) const;
};

/// First row is the header. Every row must have the header's width
/// (ParseError with the 1-based line otherwise).
CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

std::string format_csv(const CsvTable& table);
void write_csv(const CsvTable& table, const std::filesystem::path& path);

/// Shortest round-trip decimal form.
std::string format_number(double value);

}  // namespace avh
