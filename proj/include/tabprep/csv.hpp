#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tabprep/core.hpp"

namespace tabprep {

// Delimited-file dialect used throughout: comma separator, double-quote
// quoting with doubled-quote escaping, UTF-8 passthrough. Quoted fields may
// span lines; both \n and \r\n records are accepted; a UTF-8 BOM is skipped.

inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_open = false;   // current field already has literal content
  bool row_pending = false;  // row must flush at end of input
  std::size_t i = 0;
  const std::size_t n = text.size();

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_open = false;
  };
  auto end_row = [&] {
    end_field();
    records.push_back(std::move(row));
    row.clear();
    row_pending = false;
  };

  while (i < n) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          field += '"';
          i += 2;
        } else {
          in_quotes = false;
          ++i;
        }
      } else {
        field += c;
        ++i;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field.empty() && !field_open) {
          in_quotes = true;
          field_open = true;
          row_pending = true;
        } else {
          field += '"';  // stray quote mid-field, keep literal
        }
        ++i;
        break;
      case ',':
        end_field();
        row_pending = true;  // a separator implies another field follows
        ++i;
        break;
      case '\r':
        if (i + 1 < n && text[i + 1] == '\n') ++i;
        [[fallthrough]];
      case '\n':
        end_row();
        ++i;
        break;
      default:
        field += c;
        field_open = true;
        row_pending = true;
        ++i;
        break;
    }
  }
  if (in_quotes) raise(Errc::MalformedRow, "unterminated quoted field at end of input");
  if (row_pending || !field.empty() || !row.empty()) end_row();
  return records;
}

struct CsvTable {
  std::string source;  // basename, used to mint row ids
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Reads a headered table. Every data row must have exactly as many columns
/// as the header; header names must be unique.
inline CsvTable read_csv_table(const std::filesystem::path& path) {
  auto records = parse_csv(read_file_bytes(path));
  if (records.empty()) raise(Errc::MalformedRow, path.string() + ": missing header row");

  CsvTable table;
  table.source = path.filename().string();
  table.header = std::move(records.front());
  for (std::size_t i = 0; i < table.header.size(); ++i)
    for (std::size_t j = i + 1; j < table.header.size(); ++j)
      if (table.header[i] == table.header[j])
        raise(Errc::DuplicateAttribute,
              path.string() + ": duplicate column '" + table.header[i] + "'");

  table.rows.assign(std::make_move_iterator(records.begin() + 1),
                    std::make_move_iterator(records.end()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.rows[r].size() != table.header.size())
      raise(Errc::MalformedRow, path.string() + ": data row " + std::to_string(r) + " has " +
                                    std::to_string(table.rows[r].size()) + " columns, expected " +
                                    std::to_string(table.header.size()));
  }
  return table;
}

/// Reads a headerless delimited file (labels, pairs) enforcing a column-count
/// range per row.
inline std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path,
                                                           std::size_t min_cols,
                                                           std::size_t max_cols) {
  auto records = parse_csv(read_file_bytes(path));
  for (std::size_t r = 0; r < records.size(); ++r) {
    if (records[r].size() < min_cols || records[r].size() > max_cols)
      raise(Errc::MalformedRow, path.string() + ": row " + std::to_string(r) + " has " +
                                    std::to_string(records[r].size()) + " columns, expected " +
                                    (min_cols == max_cols
                                         ? std::to_string(min_cols)
                                         : std::to_string(min_cols) + ".." + std::to_string(max_cols)));
  }
  return records;
}

}  // namespace tabprep
