#pragma once

// Stand-alone re-parser for the bracketed record serialization
//   [name: "value", other: ???]
// used by the round-trip tests. It shares no code with the serializer on
// purpose: it walks the string character by character and either recovers
// the exact field list or rejects the input.
//
// Grammar accepted (names must not contain ':'; values are either a quoted
// string with \\ and \" escapes or the literal ??? for a missing value):
//   record := '[' field (', ' field)* ']'
//   field  := name ': ' ('"' escaped* '"' | '???')

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tabprep::testing {

struct ParsedField {
  std::string name;
  std::optional<std::string> value;  // nullopt when the field was ???

  bool operator==(const ParsedField&) const = default;
};

inline std::optional<std::vector<ParsedField>> parse_serialized_record(std::string_view s) {
  if (s.size() < 2 || s.front() != '[' || s.back() != ']') return std::nullopt;

  std::vector<ParsedField> fields;
  std::size_t i = 1;
  const std::size_t end = s.size() - 1;  // position of the closing ']'

  while (true) {
    ParsedField field;

    while (i < end && s[i] != ':') field.name += s[i++];
    if (i >= end || field.name.empty()) return std::nullopt;
    ++i;  // ':'
    if (i >= end || s[i] != ' ') return std::nullopt;
    ++i;

    if (s.compare(i, 3, "???") == 0 && i + 3 <= end) {
      field.value = std::nullopt;
      i += 3;
    } else if (i < end && s[i] == '"') {
      ++i;
      std::string value;
      bool closed = false;
      while (i < end) {
        char c = s[i];
        if (c == '\\') {
          if (i + 1 >= end) return std::nullopt;
          char esc = s[i + 1];
          if (esc != '\\' && esc != '"') return std::nullopt;
          value += esc;
          i += 2;
        } else if (c == '"') {
          ++i;
          closed = true;
          break;
        } else {
          value += c;
          ++i;
        }
      }
      if (!closed) return std::nullopt;
      field.value = std::move(value);
    } else {
      return std::nullopt;
    }

    fields.push_back(std::move(field));
    if (i == end) break;  // the next char is the final ']'
    if (s.compare(i, 2, ", ") != 0) return std::nullopt;
    i += 2;
    if (i >= end) return std::nullopt;  // trailing separator
  }
  return fields;
}

}  // namespace tabprep::testing
