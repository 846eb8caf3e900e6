#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tabprep/core.hpp"

namespace tabprep {

/// One extracted answer. `normalized` is empty when a boolean answer was
/// ambiguous (both or neither of yes/no present); such answers are kept and
/// scored as wrong rather than dropped.
struct ParsedAnswer {
  std::size_t question_index = 0;
  std::optional<std::string> reason;
  std::string raw_answer;
  std::optional<Label> normalized;
};

enum class ParseFailureKind { MissingAnswers, ExtraAnswers, UnparseableBlock };

inline const char* parse_failure_kind_name(ParseFailureKind k) {
  switch (k) {
    case ParseFailureKind::MissingAnswers: return "MissingAnswers";
    case ParseFailureKind::ExtraAnswers: return "ExtraAnswers";
    case ParseFailureKind::UnparseableBlock: return "UnparseableBlock";
  }
  return "?";
}

struct ParseFailure {
  ParseFailureKind kind = ParseFailureKind::UnparseableBlock;
  std::vector<std::size_t> missing_indices;
  std::vector<std::size_t> extra_indices;
  std::string detail;
};

/// Either a full set of answers (indices dense 1..expected) or a failure.
/// Never both; never neither.
struct ParseResult {
  std::optional<ParseFailure> failure;
  std::vector<ParsedAnswer> answers;
  bool ok() const { return !failure.has_value(); }
};

enum class ParseStrictness { Tolerant, Strict };

/// Normalizes a raw answer line for the task. Boolean tasks: lowercase, a
/// leading yes/no token decides, otherwise the line must contain exactly one
/// of the two tokens; empty optional means ambiguous. Value tasks: trims
/// whitespace and repeatedly strips matched surrounding quotes or symmetric
/// emphasis markers, preserving interior case; idempotent on its own output.
inline std::optional<Label> normalize_answer(std::string_view raw, const Task& task) {
  if (!task.boolean_answer()) {
    std::string_view v = trim_view(raw);
    for (;;) {
      if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'' || v.front() == '`') &&
          v.back() == v.front()) {
        v = trim_view(v.substr(1, v.size() - 2));
        continue;
      }
      if (v.size() >= 2 && (v.front() == '*' || v.front() == '_') && v.back() == v.front()) {
        std::size_t lead = 0, tail = 0;
        while (lead < v.size() && v[lead] == v.front()) ++lead;
        while (tail < v.size() && v[v.size() - 1 - tail] == v.front()) ++tail;
        if (lead + tail < v.size()) {
          std::size_t strip = std::min(lead, tail);
          v = trim_view(v.substr(strip, v.size() - 2 * strip));
          continue;
        }
      }
      break;
    }
    return Label::value(std::string(v));
  }

  std::string text = to_lower_ascii(std::string(trim_view(raw)));
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur += static_cast<char>(c);
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);

  if (!tokens.empty()) {
    if (tokens.front() == "yes") return Label::boolean(true);
    if (tokens.front() == "no") return Label::boolean(false);
  }
  bool has_yes = std::find(tokens.begin(), tokens.end(), "yes") != tokens.end();
  bool has_no = std::find(tokens.begin(), tokens.end(), "no") != tokens.end();
  if (has_yes == has_no) return std::nullopt;
  return Label::boolean(has_yes);
}

namespace detail {

inline bool is_decor_char(char c) {
  return c == '*' || c == '_' || c == '#' || c == '`' || c == '>' || c == ' ' || c == '\t';
}

// Matches an "Answer <k>:" header (case-insensitive, markdown decorations
// tolerated) and returns the index plus any content after the colon.
inline std::optional<std::pair<std::size_t, std::string>> parse_answer_header(
    std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && is_decor_char(line[i])) ++i;
  static constexpr std::string_view kWord = "answer";
  if (line.size() - i < kWord.size()) return std::nullopt;
  for (std::size_t w = 0; w < kWord.size(); ++w) {
    char c = line[i + w];
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (c != kWord[w]) return std::nullopt;
  }
  i += kWord.size();
  std::size_t spaces = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i, ++spaces;
  if (spaces == 0) return std::nullopt;
  std::size_t digits = 0;
  std::size_t value = 0;
  while (i < line.size() && line[i] >= '0' && line[i] <= '9' && digits < 9) {
    value = value * 10 + static_cast<std::size_t>(line[i] - '0');
    ++i, ++digits;
  }
  if (digits == 0 || (i < line.size() && line[i] >= '0' && line[i] <= '9')) return std::nullopt;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  if (i >= line.size() || line[i] != ':') return std::nullopt;
  ++i;
  std::string_view rest = line.substr(i);
  std::size_t b = 0, e = rest.size();
  while (b < e && is_decor_char(rest[b])) ++b;
  while (e > b && (is_decor_char(rest[e - 1]) || rest[e - 1] == '\r')) --e;
  return std::make_pair(value, std::string(rest.substr(b, e - b)));
}

inline std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace detail

/// Extracts the (reason, answer) pair for every expected question from a
/// batch response. On success the result holds exactly `expected` answers
/// sorted by index. Tolerant mode salvages format drift (joined multi-line
/// reasons, missing reason lines); strict mode reports it as a failure.
/// Failure precedence: missing answers, then extra answers, then
/// unparseable blocks. Total over arbitrary input; never throws on content.
inline ParseResult parse_batch_response(std::string_view content, std::size_t expected,
                                        const Task& task, bool reasoning_enabled,
                                        ParseStrictness strictness = ParseStrictness::Tolerant) {
  struct Block {
    std::size_t index;
    std::vector<std::string> lines;
  };
  std::vector<Block> blocks;

  std::size_t pos = 0;
  while (pos <= content.size()) {
    std::size_t eol = content.find('\n', pos);
    std::string_view line = content.substr(pos, eol == std::string_view::npos ? std::string_view::npos
                                                                              : eol - pos);
    line = detail::strip_cr(line);
    if (auto header = detail::parse_answer_header(line)) {
      Block b;
      b.index = header->first;
      if (!trim_view(header->second).empty()) b.lines.push_back(header->second);
      blocks.push_back(std::move(b));
    } else if (!blocks.empty() && !trim_view(line).empty()) {
      blocks.back().lines.push_back(std::string(trim_view(line)));
    }
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }

  ParseResult result;
  std::vector<const Block*> by_index(expected + 1, nullptr);
  std::vector<std::size_t> extras;
  std::vector<std::size_t> duplicates;
  for (const Block& b : blocks) {
    if (b.index == 0 || b.index > expected) {
      extras.push_back(b.index);
    } else if (by_index[b.index]) {
      duplicates.push_back(b.index);
    } else {
      by_index[b.index] = &b;
    }
  }

  std::vector<std::size_t> missing;
  for (std::size_t k = 1; k <= expected; ++k)
    if (!by_index[k] || by_index[k]->lines.empty()) missing.push_back(k);
  if (!missing.empty()) {
    ParseFailure f;
    f.kind = ParseFailureKind::MissingAnswers;
    f.missing_indices = missing;
    f.detail = "expected " + std::to_string(expected) + " answers, " +
               std::to_string(missing.size()) + " missing";
    result.failure = std::move(f);
    return result;
  }
  if (!extras.empty() || !duplicates.empty()) {
    ParseFailure f;
    f.kind = ParseFailureKind::ExtraAnswers;
    f.extra_indices = extras;
    f.extra_indices.insert(f.extra_indices.end(), duplicates.begin(), duplicates.end());
    std::sort(f.extra_indices.begin(), f.extra_indices.end());
    f.detail = duplicates.empty() ? "answer indices beyond the question count"
                                  : "duplicate or out-of-range answer indices";
    result.failure = std::move(f);
    return result;
  }

  for (std::size_t k = 1; k <= expected; ++k) {
    const Block& b = *by_index[k];
    ParsedAnswer ans;
    ans.question_index = k;
    if (reasoning_enabled) {
      if (strictness == ParseStrictness::Strict && b.lines.size() != 2) {
        ParseFailure f;
        f.kind = ParseFailureKind::UnparseableBlock;
        f.detail = "answer " + std::to_string(k) + " has " + std::to_string(b.lines.size()) +
                   " lines, expected reason plus answer";
        result.failure = std::move(f);
        result.answers.clear();
        return result;
      }
      ans.raw_answer = b.lines.back();
      if (b.lines.size() > 1) {
        std::string reason = b.lines[0];
        for (std::size_t i = 1; i + 1 < b.lines.size(); ++i) {
          reason += ' ';
          reason += b.lines[i];
        }
        ans.reason = std::move(reason);
      }
    } else {
      if (strictness == ParseStrictness::Strict && b.lines.size() != 1) {
        ParseFailure f;
        f.kind = ParseFailureKind::UnparseableBlock;
        f.detail = "answer " + std::to_string(k) + " has " + std::to_string(b.lines.size()) +
                   " lines, expected the answer only";
        result.failure = std::move(f);
        result.answers.clear();
        return result;
      }
      ans.raw_answer = b.lines.back();
    }
    ans.normalized = normalize_answer(ans.raw_answer, task);
    result.answers.push_back(std::move(ans));
  }
  return result;
}

}  // namespace tabprep
