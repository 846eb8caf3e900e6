#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabprep/core.hpp"
#include "tabprep/dataset.hpp"
#include "tabprep/prompt.hpp"

namespace tabprep {

namespace detail {

inline Record record_from_json(const nlohmann::ordered_json& obj, std::string id,
                               const std::string& context) {
  if (!obj.is_object())
    raise(Errc::ConfigError, context + ": record payload must be a JSON object");
  Record rec;
  rec.id = std::move(id);
  for (const auto& [name, value] : obj.items()) {
    if (value.is_null())
      rec.cells.push_back({name, std::nullopt});
    else if (value.is_string())
      rec.cells.push_back({name, value.get<std::string>()});
    else
      raise(Errc::ConfigError, context + ": attribute '" + name + "' must be a string or null");
  }
  return rec;
}

}  // namespace detail

/// Loads few-shot examples from a JSON Lines sidecar. Each line holds
/// "reason" and "answer" plus the demonstrated instance, given either
/// inline ("record" for tuple tasks, "left"/"right" for pair tasks; null
/// cell values mean missing) or as {"ref": "<instance id>"} into the
/// already-loaded dataset.
inline std::vector<FewShotExample> load_few_shots(const std::filesystem::path& path,
                                                  const Task& task,
                                                  const std::vector<DataInstance>& dataset) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::IoError, "cannot open few-shot file " + path.string());

  std::vector<FewShotExample> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    std::string context = path.string() + ":" + std::to_string(lineno);
    if (trim_view(line).empty()) continue;
    nlohmann::ordered_json obj = nlohmann::ordered_json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object())
      raise(Errc::ConfigError, context + ": not a JSON object");

    FewShotExample ex;
    for (const char* field : {"reason", "answer"}) {
      if (!obj.contains(field) || !obj[field].is_string())
        raise(Errc::ConfigError, context + ": missing string field '" + std::string(field) + "'");
    }
    ex.reason = obj["reason"].get<std::string>();
    ex.answer = obj["answer"].get<std::string>();

    if (obj.contains("ref")) {
      const std::string ref = obj["ref"].get<std::string>();
      auto it = std::find_if(dataset.begin(), dataset.end(),
                             [&](const DataInstance& d) { return d.id == ref; });
      if (it == dataset.end())
        raise(Errc::ConfigError, context + ": ref '" + ref + "' not found in dataset");
      ex.instance = *it;
      ex.instance.gold.reset();
    } else if (task.pair_input()) {
      if (!obj.contains("left") || !obj.contains("right"))
        raise(Errc::ConfigError, context + ": pair task examples need 'left' and 'right'");
      ex.instance.id = "fewshot:" + std::to_string(lineno);
      ex.instance.payload = payload_for(task.kind);
      ex.instance.left = detail::record_from_json(obj["left"], ex.instance.id + ":left", context);
      ex.instance.right =
          detail::record_from_json(obj["right"], ex.instance.id + ":right", context);
      if (task.kind == TaskKind::SchemaMatching) {
        ex.instance.left = detail::reshape_for_schema_matching(std::move(ex.instance.left), context);
        ex.instance.right =
            detail::reshape_for_schema_matching(std::move(*ex.instance.right), context);
      }
    } else {
      if (!obj.contains("record"))
        raise(Errc::ConfigError, context + ": tuple task examples need 'record'");
      ex.instance.id = "fewshot:" + std::to_string(lineno);
      ex.instance.payload = PayloadKind::Tuple;
      ex.instance.left = detail::record_from_json(obj["record"], ex.instance.id, context);
    }
    ex.validate(task);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace tabprep
