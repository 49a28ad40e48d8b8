#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ehrtext::ingest {

/// RFC-4180 table: a header row plus string-valued records.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text);
/// Header row only; cheap validation without reading the whole file.
std::vector<std::string> read_csv_header(const std::filesystem::path& path);

void write_csv(const std::filesystem::path& path, const CsvTable& table);
std::string format_csv_field(const std::string& field);

}  // namespace ehrtext::ingest
