#pragma once

#include <string>
#include <vector>

#include "tabprep/core.hpp"

namespace tabprep {

/// Makes a cell value safe for the bracketed record form: each line break
/// (\n, \r, or \r\n) becomes one space, then backslashes and double quotes
/// gain a backslash. Newlines are flattened before escaping so the output
/// always stays on one line.
inline std::string sanitize_value(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    char c = raw[i];
    if (c == '\r') {
      if (i + 1 < raw.size() && raw[i + 1] == '\n') ++i;
      out += ' ';
    } else if (c == '\n') {
      out += ' ';
    } else if (c == '\\') {
      out += "\\\\";
    } else if (c == '"') {
      out += "\\\"";
    } else {
      out += c;
    }
  }
  return out;
}

/// Serializes a record to the bracketed attribute list used in prompts:
/// [name: "value", city: ???]. Present values are quoted after sanitizing;
/// missing values render as the bare ??? placeholder.
inline std::string serialize_record(const Record& rec) {
  if (rec.cells.empty())
    raise(Errc::EmptyRecord, "record " + rec.id + " has no attributes to serialize");
  std::string out = "[";
  for (std::size_t i = 0; i < rec.cells.size(); ++i) {
    if (i) out += ", ";
    out += rec.cells[i].name;
    out += ": ";
    if (rec.cells[i].value) {
      out += '"';
      out += sanitize_value(*rec.cells[i].value);
      out += '"';
    } else {
      out += "???";
    }
  }
  out += ']';
  return out;
}

/// Serializes the instance payload: one string for tuple tasks, two (left
/// then right) for pair tasks. The task is consulted only to cross-check
/// the payload shape.
inline std::vector<std::string> serialize_instance(const DataInstance& inst, const Task& task) {
  if (!inst.matches(task))
    raise(Errc::PayloadTaskMismatch,
          "instance " + inst.id + " payload does not match task " + task_kind_name(task.kind));
  std::vector<std::string> out;
  out.push_back(serialize_record(inst.left));
  if (inst.right) out.push_back(serialize_record(*inst.right));
  return out;
}

/// Flat text used for embedding and clustering: the serialized record
/// strings joined by a single space.
inline std::string embedding_text(const DataInstance& inst, const Task& task) {
  auto parts = serialize_instance(inst, task);
  std::string out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) {
    out += ' ';
    out += parts[i];
  }
  return out;
}

}  // namespace tabprep
