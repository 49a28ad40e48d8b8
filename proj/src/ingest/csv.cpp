#include "ehrtext/ingest/csv.hpp"

#include <fstream>
#include <sstream>

#include "ehrtext/core/errors.hpp"

namespace ehrtext::ingest {

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  return std::nullopt;
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Parses one record starting at `pos`; returns false at end of input.
bool next_record(const std::string& text, std::size_t& pos, std::vector<std::string>& record) {
  record.clear();
  if (pos >= text.size()) return false;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  while (pos < text.size()) {
    const char c = text[pos];
    if (in_quotes) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          field.push_back('"');
          pos += 2;
          continue;
        }
        in_quotes = false;
        ++pos;
        continue;
      }
      field.push_back(c);
      ++pos;
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
      ++pos;
      continue;
    }
    if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      field_started = false;
      ++pos;
      continue;
    }
    if (c == '\r' || c == '\n') {
      if (c == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
      ++pos;
      record.push_back(std::move(field));
      return true;
    }
    field.push_back(c);
    field_started = true;
    ++pos;
  }
  if (in_quotes) throw FormatError("unterminated quoted CSV field");
  record.push_back(std::move(field));
  return true;
}

}  // namespace

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::size_t pos = 0;
  // Skip a UTF-8 byte order mark.
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) pos = 3;
  std::vector<std::string> record;
  if (!next_record(text, pos, record)) return table;
  table.header = record;
  while (next_record(text, pos, record)) {
    if (record.size() == 1 && record[0].empty()) continue;  // blank line
    if (record.size() != table.header.size())
      throw FormatError("CSV record with " + std::to_string(record.size()) + " fields, header has " +
                        std::to_string(table.header.size()));
    table.rows.push_back(record);
  }
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  try {
    return parse_csv(slurp(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::string> read_csv_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return parse_csv(line + "\n").header;
}

std::string format_csv_field(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  auto write_row = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << format_csv_field(row[i]);
    }
    out << '\n';
  };
  write_row(table.header);
  for (const auto& row : table.rows) write_row(row);
}

}  // namespace ehrtext::ingest
