#pragma once

#include <cctype>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tabprep {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class Errc {
  IoError,
  MalformedRow,
  DuplicateAttribute,
  MissingTargetAttribute,
  UnknownLabelToken,
  UnknownAttribute,
  TargetAttributeDropped,
  EmptyRecord,
  PayloadTaskMismatch,
  EmptyFewShots,
  ConfigError,
  RateLimited,
  Timeout,
  ProtocolError,
  AuthError,
  ReplayMiss,
  CorruptTranscript,
  EmbedderUnavailable,
  DimensionMismatch,
  MissingGold,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::IoError: return "IoError";
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::DuplicateAttribute: return "DuplicateAttribute";
    case Errc::MissingTargetAttribute: return "MissingTargetAttribute";
    case Errc::UnknownLabelToken: return "UnknownLabelToken";
    case Errc::UnknownAttribute: return "UnknownAttribute";
    case Errc::TargetAttributeDropped: return "TargetAttributeDropped";
    case Errc::EmptyRecord: return "EmptyRecord";
    case Errc::PayloadTaskMismatch: return "PayloadTaskMismatch";
    case Errc::EmptyFewShots: return "EmptyFewShots";
    case Errc::ConfigError: return "ConfigError";
    case Errc::RateLimited: return "RateLimited";
    case Errc::Timeout: return "Timeout";
    case Errc::ProtocolError: return "ProtocolError";
    case Errc::AuthError: return "AuthError";
    case Errc::ReplayMiss: return "ReplayMiss";
    case Errc::CorruptTranscript: return "CorruptTranscript";
    case Errc::EmbedderUnavailable: return "EmbedderUnavailable";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::MissingGold: return "MissingGold";
  }
  return "UnknownError";
}

/// Library-wide exception. `code()` identifies the failure class; `retriable()`
/// marks transient backend conditions the chat client may retry.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg, bool retriable = false)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg),
        code_(code),
        retriable_(retriable) {}

  Errc code() const noexcept { return code_; }
  bool retriable() const noexcept { return retriable_; }

 private:
  Errc code_;
  bool retriable_;
};

[[noreturn]] inline void raise(Errc code, const std::string& msg, bool retriable = false) {
  throw Error(code, msg, retriable);
}

// ---------------------------------------------------------------------------
// Tasks
// ---------------------------------------------------------------------------

enum class TaskKind { ErrorDetection, DataImputation, SchemaMatching, EntityMatching };

inline const char* task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::ErrorDetection: return "error_detection";
    case TaskKind::DataImputation: return "data_imputation";
    case TaskKind::SchemaMatching: return "schema_matching";
    case TaskKind::EntityMatching: return "entity_matching";
  }
  return "unknown";
}

inline TaskKind parse_task_kind(std::string_view s) {
  if (s == "ed" || s == "error_detection") return TaskKind::ErrorDetection;
  if (s == "di" || s == "data_imputation") return TaskKind::DataImputation;
  if (s == "sm" || s == "schema_matching") return TaskKind::SchemaMatching;
  if (s == "em" || s == "entity_matching") return TaskKind::EntityMatching;
  raise(Errc::ConfigError, "unknown task kind '" + std::string(s) + "' (expected ed|di|sm|em)");
}

/// What the model is asked to decide. The target attribute is present exactly
/// for the two single-record tasks that focus on one attribute.
struct Task {
  TaskKind kind{TaskKind::EntityMatching};
  std::optional<std::string> target_attribute;

  static Task error_detection(std::string target) {
    return Task{TaskKind::ErrorDetection, std::move(target)};
  }
  static Task data_imputation(std::string target) {
    return Task{TaskKind::DataImputation, std::move(target)};
  }
  static Task schema_matching() { return Task{TaskKind::SchemaMatching, std::nullopt}; }
  static Task entity_matching() { return Task{TaskKind::EntityMatching, std::nullopt}; }

  bool needs_target() const {
    return kind == TaskKind::ErrorDetection || kind == TaskKind::DataImputation;
  }
  bool pair_input() const {
    return kind == TaskKind::SchemaMatching || kind == TaskKind::EntityMatching;
  }
  /// ED/SM/EM answers are yes/no; DI answers are free-text values.
  bool boolean_answer() const { return kind != TaskKind::DataImputation; }

  void validate() const {
    if (needs_target() != target_attribute.has_value())
      raise(Errc::ConfigError,
            needs_target() ? "task requires a target attribute" : "task takes no target attribute");
    if (target_attribute && target_attribute->empty())
      raise(Errc::ConfigError, "target attribute must be nonempty");
  }
};

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

/// Gold label: yes/no for ED/SM/EM, a free-text value for DI.
class Label {
 public:
  static Label boolean(bool b) { return Label(b); }
  static Label value(std::string v) { return Label(std::move(v)); }

  bool is_boolean() const { return std::holds_alternative<bool>(v_); }
  bool as_boolean() const { return std::get<bool>(v_); }
  const std::string& as_value() const { return std::get<std::string>(v_); }

  bool matches_task(const Task& t) const { return is_boolean() == t.boolean_answer(); }

  friend bool operator==(const Label& a, const Label& b) { return a.v_ == b.v_; }

 private:
  explicit Label(bool b) : v_(b) {}
  explicit Label(std::string v) : v_(std::move(v)) {}
  std::variant<bool, std::string> v_;
};

// ---------------------------------------------------------------------------
// Records and instances
// ---------------------------------------------------------------------------

/// One attribute of a record. A missing value is an absent optional, never a
/// sentinel string; the "???" marker exists only in serialized prompt text.
struct Cell {
  std::string name;
  std::optional<std::string> value;

  friend bool operator==(const Cell&, const Cell&) = default;
};

struct Record {
  std::string id;
  std::vector<Cell> cells;  // order preserved from source; names unique

  const Cell* find(std::string_view name) const {
    for (const auto& c : cells)
      if (c.name == name) return &c;
    return nullptr;
  }
  bool has(std::string_view name) const { return find(name) != nullptr; }

  friend bool operator==(const Record&, const Record&) = default;
};

enum class PayloadKind { Tuple, AttributePair, TuplePair };

inline PayloadKind payload_for(TaskKind k) {
  switch (k) {
    case TaskKind::SchemaMatching: return PayloadKind::AttributePair;
    case TaskKind::EntityMatching: return PayloadKind::TuplePair;
    default: return PayloadKind::Tuple;
  }
}

/// One unit of work: a tuple (ED/DI), an attribute pair (SM) or a tuple pair
/// (EM), with an optional gold label.
struct DataInstance {
  std::string id;
  PayloadKind payload{PayloadKind::Tuple};
  Record left;
  std::optional<Record> right;
  std::optional<Label> gold;

  bool is_pair() const { return payload != PayloadKind::Tuple; }
  bool matches(const Task& t) const {
    if (payload != payload_for(t.kind)) return false;
    return is_pair() == right.has_value();
  }

  friend bool operator==(const DataInstance&, const DataInstance&) = default;
};

// ---------------------------------------------------------------------------
// Chat messages
// ---------------------------------------------------------------------------

enum class Role { System, User, Assistant };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "unknown";
}

struct Message {
  Role role{Role::User};
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

enum class BackendKind { Http, Mock, Replay };

inline const char* backend_kind_name(BackendKind k) {
  switch (k) {
    case BackendKind::Http: return "http";
    case BackendKind::Mock: return "mock";
    case BackendKind::Replay: return "replay";
  }
  return "unknown";
}

inline BackendKind parse_backend_kind(std::string_view s) {
  if (s == "http") return BackendKind::Http;
  if (s == "mock") return BackendKind::Mock;
  if (s == "replay") return BackendKind::Replay;
  raise(Errc::ConfigError, "unknown backend '" + std::string(s) + "' (expected http|mock|replay)");
}

// ---------------------------------------------------------------------------
// Small shared utilities
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char b : data) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex16(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

inline std::string_view trim_view(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace tabprep
