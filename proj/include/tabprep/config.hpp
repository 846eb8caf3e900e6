#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabprep/batching.hpp"
#include "tabprep/core.hpp"
#include "tabprep/gateway.hpp"
#include "tabprep/response_parser.hpp"

namespace tabprep {

/// Everything a run needs, resolved before any backend call. Serialized
/// into the run directory so a finished run can be replayed bit-identically.
struct RunConfig {
  Task task{TaskKind::EntityMatching, std::nullopt};

  // Data
  std::filesystem::path dataset;
  std::optional<std::filesystem::path> left_table;
  std::optional<std::filesystem::path> right_table;
  std::optional<std::string> id_column;
  std::optional<std::filesystem::path> labels;
  std::vector<std::string> keep_attributes;  // empty = keep all

  // Prompting
  bool reasoning = true;
  std::optional<std::filesystem::path> few_shot_file;
  std::optional<std::size_t> shots;  // cap; defaults to 3 for SM, 10 otherwise
  std::optional<std::string> type_hint;
  bool confirm_target = true;

  // Batching
  std::size_t batch_size = 1;
  BatchMode batch_mode = BatchMode::Random;
  std::optional<std::size_t> clusters;
  std::uint64_t seed = 0;
  std::size_t embed_dimension = 256;
  std::optional<std::string> embed_url;

  // Backend
  BackendKind backend = BackendKind::Mock;
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.35;
  std::optional<long long> max_tokens;
  std::string base_url;
  std::string api_key_env = "TABPREP_API_KEY";
  std::optional<std::filesystem::path> replay_transcript;
  std::optional<std::filesystem::path> mock_answers;
  PriceTable prices;
  std::optional<long long> requests_per_minute;
  std::optional<long long> tokens_per_minute;
  int max_attempts = 5;
  std::size_t workers = 1;

  // Scoring / output
  ParseStrictness strictness = ParseStrictness::Tolerant;
  double parse_failure_threshold = 0.10;
  std::filesystem::path out_dir;

  std::size_t effective_shots() const {
    if (shots) return *shots;
    return task.kind == TaskKind::SchemaMatching ? 3 : 10;
  }

  bool use_few_shots() const { return few_shot_file.has_value() && effective_shots() > 0; }

  void validate() const {
    task.validate();
    if (dataset.empty()) raise(Errc::ConfigError, "a dataset path is required");
    if (batch_size == 0) raise(Errc::ConfigError, "batch size must be >= 1");
    if (temperature < 0.0 || temperature > 2.0)
      raise(Errc::ConfigError, "temperature must lie in [0, 2]");
    if (parse_failure_threshold < 0.0 || parse_failure_threshold > 1.0)
      raise(Errc::ConfigError, "parse failure threshold must lie in [0, 1]");
    if (backend == BackendKind::Http && base_url.empty())
      raise(Errc::ConfigError, "http backend needs base_url");
    if (backend == BackendKind::Replay && !replay_transcript)
      raise(Errc::ConfigError, "replay backend needs a transcript path");
    if (type_hint && task.kind != TaskKind::DataImputation)
      raise(Errc::ConfigError, "type hints apply only to data imputation");
    if (clusters && *clusters == 0) raise(Errc::ConfigError, "cluster count must be >= 1");
    if (max_attempts < 1) raise(Errc::ConfigError, "max attempts must be >= 1");
    if (workers == 0) raise(Errc::ConfigError, "worker count must be >= 1");
    if (embed_dimension == 0) raise(Errc::ConfigError, "embedding dimension must be >= 1");
  }

  std::string api_key() const {
    const char* v = std::getenv(api_key_env.c_str());
    return v ? v : "";
  }
};

/// Recommended batch-size range for a model family, when one is known.
inline std::optional<std::pair<std::size_t, std::size_t>> recommended_batch_range(
    std::string_view model) {
  std::string m = to_lower_ascii(model);
  using Range = std::pair<std::size_t, std::size_t>;
  if (m.find("gpt-4o") != std::string::npos) return Range{5, 10};
  if (m.find("gpt-4") != std::string::npos) return Range{10, 15};
  if (m.find("gpt-3.5") != std::string::npos) return Range{10, 20};
  return std::nullopt;
}

namespace detail {

inline void require_kind(const json& j, const char* key, bool ok, const char* want) {
  if (!ok)
    raise(Errc::ConfigError, std::string("config key '") + key + "' must be " + want);
  (void)j;
}

template <typename T>
T get_checked(const json& j, const char* key);

template <>
inline std::string get_checked<std::string>(const json& j, const char* key) {
  require_kind(j, key, j.at(key).is_string(), "a string");
  return j.at(key).get<std::string>();
}

template <>
inline long long get_checked<long long>(const json& j, const char* key) {
  require_kind(j, key, j.at(key).is_number_integer(), "an integer");
  return j.at(key).get<long long>();
}

template <>
inline double get_checked<double>(const json& j, const char* key) {
  require_kind(j, key, j.at(key).is_number(), "a number");
  return j.at(key).get<double>();
}

template <>
inline bool get_checked<bool>(const json& j, const char* key) {
  require_kind(j, key, j.at(key).is_boolean(), "a boolean");
  return j.at(key).get<bool>();
}

}  // namespace detail

/// Builds a RunConfig from a JSON object (config file contents, possibly
/// with CLI overrides already merged in). Unknown keys are rejected so
/// typos fail fast instead of silently running with defaults.
inline RunConfig config_from_json(const json& j) {
  static const std::vector<std::string> known = {
      "task", "target_attribute", "dataset", "left_table", "right_table", "id_column",
      "labels", "keep_attributes", "reasoning", "few_shot_file", "shots", "type_hint",
      "confirm_target", "batch_size", "batch_mode", "clusters", "seed", "embed_dimension",
      "embed_url", "backend", "model", "temperature", "max_tokens", "base_url", "api_key_env",
      "replay_transcript", "mock_answers", "price_prompt_micro_per_1k",
      "price_completion_micro_per_1k", "requests_per_minute", "tokens_per_minute",
      "max_attempts", "workers", "strictness", "parse_failure_threshold", "out_dir"};
  if (!j.is_object()) raise(Errc::ConfigError, "config root must be a JSON object");
  for (const auto& item : j.items())
    if (std::find(known.begin(), known.end(), item.key()) == known.end())
      raise(Errc::ConfigError, "unknown config key '" + item.key() + "'");

  RunConfig c;
  if (!j.contains("task")) raise(Errc::ConfigError, "config needs a 'task'");
  TaskKind kind = parse_task_kind(detail::get_checked<std::string>(j, "task"));
  std::optional<std::string> target;
  if (j.contains("target_attribute") && !j.at("target_attribute").is_null())
    target = detail::get_checked<std::string>(j, "target_attribute");
  c.task = Task{kind, target};

  auto path_of = [&](const char* key) {
    return std::filesystem::path(detail::get_checked<std::string>(j, key));
  };
  if (j.contains("dataset")) c.dataset = path_of("dataset");
  if (j.contains("left_table")) c.left_table = path_of("left_table");
  if (j.contains("right_table")) c.right_table = path_of("right_table");
  if (j.contains("id_column")) c.id_column = detail::get_checked<std::string>(j, "id_column");
  if (j.contains("labels")) c.labels = path_of("labels");
  if (j.contains("keep_attributes")) {
    detail::require_kind(j, "keep_attributes", j.at("keep_attributes").is_array(),
                         "an array of strings");
    for (const auto& a : j.at("keep_attributes")) c.keep_attributes.push_back(a.get<std::string>());
  }
  if (j.contains("reasoning")) c.reasoning = detail::get_checked<bool>(j, "reasoning");
  if (j.contains("few_shot_file")) c.few_shot_file = path_of("few_shot_file");
  if (j.contains("shots"))
    c.shots = static_cast<std::size_t>(detail::get_checked<long long>(j, "shots"));
  if (j.contains("type_hint")) c.type_hint = detail::get_checked<std::string>(j, "type_hint");
  if (j.contains("confirm_target")) c.confirm_target = detail::get_checked<bool>(j, "confirm_target");
  if (j.contains("batch_size"))
    c.batch_size = static_cast<std::size_t>(detail::get_checked<long long>(j, "batch_size"));
  if (j.contains("batch_mode"))
    c.batch_mode = parse_batch_mode(detail::get_checked<std::string>(j, "batch_mode"));
  if (j.contains("clusters"))
    c.clusters = static_cast<std::size_t>(detail::get_checked<long long>(j, "clusters"));
  if (j.contains("seed"))
    c.seed = static_cast<std::uint64_t>(detail::get_checked<long long>(j, "seed"));
  if (j.contains("embed_dimension"))
    c.embed_dimension =
        static_cast<std::size_t>(detail::get_checked<long long>(j, "embed_dimension"));
  if (j.contains("embed_url")) c.embed_url = detail::get_checked<std::string>(j, "embed_url");
  if (j.contains("backend"))
    c.backend = parse_backend_kind(detail::get_checked<std::string>(j, "backend"));
  if (j.contains("model")) c.model = detail::get_checked<std::string>(j, "model");
  if (j.contains("temperature")) c.temperature = detail::get_checked<double>(j, "temperature");
  if (j.contains("max_tokens")) c.max_tokens = detail::get_checked<long long>(j, "max_tokens");
  if (j.contains("base_url")) c.base_url = detail::get_checked<std::string>(j, "base_url");
  if (j.contains("api_key_env")) c.api_key_env = detail::get_checked<std::string>(j, "api_key_env");
  if (j.contains("replay_transcript")) c.replay_transcript = path_of("replay_transcript");
  if (j.contains("mock_answers")) c.mock_answers = path_of("mock_answers");
  if (j.contains("price_prompt_micro_per_1k"))
    c.prices.prompt_micro_per_1k = detail::get_checked<long long>(j, "price_prompt_micro_per_1k");
  if (j.contains("price_completion_micro_per_1k"))
    c.prices.completion_micro_per_1k =
        detail::get_checked<long long>(j, "price_completion_micro_per_1k");
  if (j.contains("requests_per_minute"))
    c.requests_per_minute = detail::get_checked<long long>(j, "requests_per_minute");
  if (j.contains("tokens_per_minute"))
    c.tokens_per_minute = detail::get_checked<long long>(j, "tokens_per_minute");
  if (j.contains("max_attempts"))
    c.max_attempts = static_cast<int>(detail::get_checked<long long>(j, "max_attempts"));
  if (j.contains("workers"))
    c.workers = static_cast<std::size_t>(detail::get_checked<long long>(j, "workers"));
  if (j.contains("strictness")) {
    std::string s = detail::get_checked<std::string>(j, "strictness");
    if (s == "tolerant") c.strictness = ParseStrictness::Tolerant;
    else if (s == "strict") c.strictness = ParseStrictness::Strict;
    else raise(Errc::ConfigError, "strictness must be 'tolerant' or 'strict'");
  }
  if (j.contains("parse_failure_threshold"))
    c.parse_failure_threshold = detail::get_checked<double>(j, "parse_failure_threshold");
  if (j.contains("out_dir")) c.out_dir = path_of("out_dir");
  return c;
}

inline json config_to_json(const RunConfig& c) {
  json j;
  j["task"] = task_kind_name(c.task.kind);
  j["target_attribute"] = c.task.target_attribute ? json(*c.task.target_attribute) : json(nullptr);
  j["dataset"] = c.dataset.string();
  if (c.left_table) j["left_table"] = c.left_table->string();
  if (c.right_table) j["right_table"] = c.right_table->string();
  if (c.id_column) j["id_column"] = *c.id_column;
  if (c.labels) j["labels"] = c.labels->string();
  if (!c.keep_attributes.empty()) j["keep_attributes"] = c.keep_attributes;
  j["reasoning"] = c.reasoning;
  if (c.few_shot_file) j["few_shot_file"] = c.few_shot_file->string();
  if (c.shots) j["shots"] = static_cast<long long>(*c.shots);
  if (c.type_hint) j["type_hint"] = *c.type_hint;
  j["confirm_target"] = c.confirm_target;
  j["batch_size"] = static_cast<long long>(c.batch_size);
  j["batch_mode"] = batch_mode_name(c.batch_mode);
  if (c.clusters) j["clusters"] = static_cast<long long>(*c.clusters);
  j["seed"] = static_cast<long long>(c.seed);
  j["embed_dimension"] = static_cast<long long>(c.embed_dimension);
  if (c.embed_url) j["embed_url"] = *c.embed_url;
  j["backend"] = backend_kind_name(c.backend);
  j["model"] = c.model;
  j["temperature"] = c.temperature;
  if (c.max_tokens) j["max_tokens"] = *c.max_tokens;
  if (!c.base_url.empty()) j["base_url"] = c.base_url;
  j["api_key_env"] = c.api_key_env;
  if (c.replay_transcript) j["replay_transcript"] = c.replay_transcript->string();
  if (c.mock_answers) j["mock_answers"] = c.mock_answers->string();
  j["price_prompt_micro_per_1k"] = c.prices.prompt_micro_per_1k;
  j["price_completion_micro_per_1k"] = c.prices.completion_micro_per_1k;
  if (c.requests_per_minute) j["requests_per_minute"] = *c.requests_per_minute;
  if (c.tokens_per_minute) j["tokens_per_minute"] = *c.tokens_per_minute;
  j["max_attempts"] = c.max_attempts;
  j["workers"] = static_cast<long long>(c.workers);
  j["strictness"] = c.strictness == ParseStrictness::Strict ? "strict" : "tolerant";
  j["parse_failure_threshold"] = c.parse_failure_threshold;
  j["out_dir"] = c.out_dir.string();
  return j;
}

inline RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::IoError, "cannot open config file " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) raise(Errc::ConfigError, path.string() + ": invalid JSON");
  return config_from_json(j);
}

/// Stable digest of everything that shapes prompts and batching. Reports
/// carry it so two runs are comparable at a glance.
inline std::string config_fingerprint(const RunConfig& c) {
  json j;
  j["task"] = task_kind_name(c.task.kind);
  j["target"] = c.task.target_attribute ? json(*c.task.target_attribute) : json(nullptr);
  j["model"] = c.model;
  j["temperature"] = c.temperature;
  j["seed"] = static_cast<long long>(c.seed);
  j["batch_size"] = static_cast<long long>(c.batch_size);
  j["batch_mode"] = batch_mode_name(c.batch_mode);
  j["clusters"] = c.clusters ? json(static_cast<long long>(*c.clusters)) : json(nullptr);
  j["reasoning"] = c.reasoning;
  j["shots"] = static_cast<long long>(c.use_few_shots() ? c.effective_shots() : 0);
  j["type_hint"] = c.type_hint ? json(*c.type_hint) : json(nullptr);
  j["keep"] = c.keep_attributes;
  j["confirm_target"] = c.confirm_target;
  j["strictness"] = c.strictness == ParseStrictness::Strict ? "strict" : "tolerant";
  return hex16(fnv1a64(j.dump()));
}

}  // namespace tabprep
