// Command-line entry point: run, dry-run, estimate, ablate, evaluate.
// Exit codes: 0 success, 1 golden mismatch, 2 config or data error,
// 3 backend error, 4 parse-failure threshold exceeded.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tabprep/config.hpp"
#include "tabprep/runner.hpp"

namespace {

using tabprep::json;

struct CommonFlags {
  std::string config_file;
  std::string task, target, dataset, left_table, right_table, id_column, labels;
  std::vector<std::string> keep;
  bool no_reasoning = false;
  std::string few_shots;
  long long shots = 0;
  std::string type_hint;
  bool no_confirm_target = false;
  long long batch_size = 0;
  std::string batch_mode;
  long long clusters = 0;
  long long seed = 0;
  long long embed_dim = 0;
  std::string embed_url;
  std::string backend, model, base_url, api_key_env, replay_transcript, mock_answers;
  double temperature = 0.0;
  long long max_tokens = 0;
  long long price_prompt = 0, price_completion = 0;
  long long rpm = 0, tpm = 0;
  long long max_attempts = 0;
  long long workers = 0;
  bool strict = false;
  double parse_failure_threshold = 0.0;
  std::string out_dir;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_file, "JSON config file; flags override its keys");
  cmd->add_option("--task", f.task, "ed|di|sm|em");
  cmd->add_option("--target", f.target, "target attribute (ed/di)");
  cmd->add_option("--dataset", f.dataset, "CSV table, or pairs file for sm/em with side tables");
  cmd->add_option("--left-table", f.left_table, "left side table (sm/em pairs mode)");
  cmd->add_option("--right-table", f.right_table, "right side table (sm/em pairs mode)");
  cmd->add_option("--id-column", f.id_column, "key column for pairs-file references");
  cmd->add_option("--labels", f.labels, "gold labels CSV (id,label)");
  cmd->add_option("--keep", f.keep, "feature keep-list (repeatable)");
  cmd->add_flag("--no-reasoning", f.no_reasoning, "disable the reason line (ZS-R off)");
  cmd->add_option("--few-shots", f.few_shots, "few-shot sidecar (JSON Lines)");
  cmd->add_option("--shots", f.shots, "max few-shot examples (default 3 for sm, 10 otherwise)");
  cmd->add_option("--type-hint", f.type_hint, "verbatim type hint sentence (di)");
  cmd->add_flag("--no-confirm-target", f.no_confirm_target,
                "drop the target-confirmation sentence (ed)");
  cmd->add_option("--batch-size", f.batch_size, "questions per prompt");
  cmd->add_option("--batch-mode", f.batch_mode, "random|cluster");
  cmd->add_option("--clusters", f.clusters, "cluster count for cluster mode");
  cmd->add_option("--seed", f.seed, "PRNG seed for batching and jitter");
  cmd->add_option("--embed-dim", f.embed_dim, "embedding dimension (default 256)");
  cmd->add_option("--embed-url", f.embed_url, "remote embedding endpoint base URL");
  cmd->add_option("--backend", f.backend, "http|mock|replay");
  cmd->add_option("--model", f.model, "model name sent on the wire");
  cmd->add_option("--temperature", f.temperature, "sampling temperature (default 0.35)");
  cmd->add_option("--max-tokens", f.max_tokens, "completion token cap");
  cmd->add_option("--base-url", f.base_url, "chat-completions base URL (http backend)");
  cmd->add_option("--api-key-env", f.api_key_env, "env var holding the API key");
  cmd->add_option("--replay-transcript", f.replay_transcript, "transcript for the replay backend");
  cmd->add_option("--mock-answers", f.mock_answers, "scripted answers for the mock backend");
  cmd->add_option("--price-prompt", f.price_prompt, "prompt price, micro-currency per 1k tokens");
  cmd->add_option("--price-completion", f.price_completion,
                  "completion price, micro-currency per 1k tokens");
  cmd->add_option("--rpm", f.rpm, "rate limit: requests per minute");
  cmd->add_option("--tpm", f.tpm, "rate limit: tokens per minute");
  cmd->add_option("--max-attempts", f.max_attempts, "retry budget per request (default 5)");
  cmd->add_option("--workers", f.workers, "concurrent batch workers (default 1)");
  cmd->add_flag("--strict", f.strict, "treat answer-format drift as a parse failure");
  cmd->add_option("--parse-failure-threshold", f.parse_failure_threshold,
                  "max tolerated unparsed-instance fraction (default 0.10)");
  cmd->add_option("--out", f.out_dir, "run directory");
}

json merged_config_json(const CLI::App* cmd, const CommonFlags& f) {
  json j = json::object();
  if (cmd->count("--config")) {
    std::ifstream in(f.config_file, std::ios::binary);
    if (!in) tabprep::raise(tabprep::Errc::IoError, "cannot open config file " + f.config_file);
    j = json::parse(in, nullptr, false);
    if (j.is_discarded())
      tabprep::raise(tabprep::Errc::ConfigError, f.config_file + ": invalid JSON");
  }
  auto set_if = [&](const char* flag, const char* key, auto value) {
    if (cmd->count(flag)) j[key] = value;
  };
  set_if("--task", "task", f.task);
  set_if("--target", "target_attribute", f.target);
  set_if("--dataset", "dataset", f.dataset);
  set_if("--left-table", "left_table", f.left_table);
  set_if("--right-table", "right_table", f.right_table);
  set_if("--id-column", "id_column", f.id_column);
  set_if("--labels", "labels", f.labels);
  set_if("--keep", "keep_attributes", f.keep);
  if (cmd->count("--no-reasoning")) j["reasoning"] = false;
  set_if("--few-shots", "few_shot_file", f.few_shots);
  set_if("--shots", "shots", f.shots);
  set_if("--type-hint", "type_hint", f.type_hint);
  if (cmd->count("--no-confirm-target")) j["confirm_target"] = false;
  set_if("--batch-size", "batch_size", f.batch_size);
  set_if("--batch-mode", "batch_mode", f.batch_mode);
  set_if("--clusters", "clusters", f.clusters);
  set_if("--seed", "seed", f.seed);
  set_if("--embed-dim", "embed_dimension", f.embed_dim);
  set_if("--embed-url", "embed_url", f.embed_url);
  set_if("--backend", "backend", f.backend);
  set_if("--model", "model", f.model);
  set_if("--temperature", "temperature", f.temperature);
  set_if("--max-tokens", "max_tokens", f.max_tokens);
  set_if("--base-url", "base_url", f.base_url);
  set_if("--api-key-env", "api_key_env", f.api_key_env);
  set_if("--replay-transcript", "replay_transcript", f.replay_transcript);
  set_if("--mock-answers", "mock_answers", f.mock_answers);
  set_if("--price-prompt", "price_prompt_micro_per_1k", f.price_prompt);
  set_if("--price-completion", "price_completion_micro_per_1k", f.price_completion);
  set_if("--rpm", "requests_per_minute", f.rpm);
  set_if("--tpm", "tokens_per_minute", f.tpm);
  set_if("--max-attempts", "max_attempts", f.max_attempts);
  set_if("--workers", "workers", f.workers);
  if (cmd->count("--strict")) j["strictness"] = "strict";
  set_if("--parse-failure-threshold", "parse_failure_threshold", f.parse_failure_threshold);
  set_if("--out", "out_dir", f.out_dir);
  return j;
}

int exit_code_for(tabprep::Errc code) {
  switch (code) {
    case tabprep::Errc::RateLimited:
    case tabprep::Errc::Timeout:
    case tabprep::Errc::ProtocolError:
    case tabprep::Errc::AuthError:
    case tabprep::Errc::ReplayMiss:
    case tabprep::Errc::CorruptTranscript:
    case tabprep::Errc::EmbedderUnavailable:
      return 3;
    default:
      return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LLM-backed tabular preprocessing harness"};
  app.require_subcommand(1);

  CommonFlags run_f, dry_f, est_f, abl_f;
  CLI::App* run_cmd = app.add_subcommand("run", "execute the full pipeline and score it");
  add_common_flags(run_cmd, run_f);

  CLI::App* dry_cmd = app.add_subcommand("dry-run", "write prompts and plan, no backend calls");
  add_common_flags(dry_cmd, dry_f);
  std::string golden_dir;
  dry_cmd->add_option("--golden", golden_dir, "compare written prompts byte-wise with this dir");

  CLI::App* est_cmd = app.add_subcommand("estimate", "predict prompt tokens per batch size");
  add_common_flags(est_cmd, est_f);
  std::vector<std::size_t> sizes{1, 2, 4, 8, 15};
  est_cmd->add_option("--sizes", sizes, "candidate batch sizes");

  CLI::App* abl_cmd = app.add_subcommand("ablate", "run the prompt-component grid");
  add_common_flags(abl_cmd, abl_f);
  std::string rows_arg;
  abl_cmd->add_option("--rows", rows_arg,
                      "semicolon-separated component rows, e.g. \"ZS-T;ZS-T+FS+B\"");

  CLI::App* eval_cmd = app.add_subcommand("evaluate", "re-score a finished run directory");
  std::string run_dir;
  eval_cmd->add_option("--run-dir", run_dir, "directory written by a previous run")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      tabprep::RunConfig c = tabprep::config_from_json(merged_config_json(run_cmd, run_f));
      tabprep::RunOutcome out = tabprep::cmd_run(c, std::cout);
      if (out.threshold_exceeded) {
        std::cerr << "parse-failure rate " << out.parse_failure_rate
                  << " exceeds threshold " << c.parse_failure_threshold << "\n";
        return 4;
      }
      return 0;
    }
    if (dry_cmd->parsed()) {
      tabprep::RunConfig c = tabprep::config_from_json(merged_config_json(dry_cmd, dry_f));
      tabprep::cmd_dry_run(c, std::cout);
      if (dry_cmd->count("--golden")) {
        auto mismatches = tabprep::compare_prompts_with_golden(c.out_dir / "prompts", golden_dir);
        if (!mismatches.empty()) {
          for (const auto& m : mismatches) std::cerr << "golden mismatch: " << m << "\n";
          return 1;
        }
        std::cout << "all prompts match the golden directory\n";
      }
      return 0;
    }
    if (est_cmd->parsed()) {
      tabprep::RunConfig c = tabprep::config_from_json(merged_config_json(est_cmd, est_f));
      tabprep::cmd_estimate(c, sizes, std::cout);
      return 0;
    }
    if (abl_cmd->parsed()) {
      tabprep::RunConfig c = tabprep::config_from_json(merged_config_json(abl_cmd, abl_f));
      std::vector<tabprep::AblationComponents> grid;
      if (abl_cmd->count("--rows")) {
        std::size_t start = 0;
        while (start <= rows_arg.size()) {
          std::size_t semi = rows_arg.find(';', start);
          std::string row = rows_arg.substr(
              start, semi == std::string::npos ? std::string::npos : semi - start);
          if (!tabprep::trim_view(row).empty())
            grid.push_back(tabprep::parse_ablation_components(row));
          if (semi == std::string::npos) break;
          start = semi + 1;
        }
        if (grid.empty())
          tabprep::raise(tabprep::Errc::ConfigError, "--rows named no ablation rows");
      } else {
        grid = tabprep::default_ablation_grid();
      }
      auto cells = tabprep::cmd_ablate(c, grid, std::cout);
      for (const auto& cell : cells)
        if (cell.threshold_exceeded) {
          std::cerr << "parse-failure threshold exceeded in row " << cell.components.name()
                    << "\n";
          return 4;
        }
      return 0;
    }
    if (eval_cmd->parsed()) {
      tabprep::RunOutcome out = tabprep::cmd_evaluate(run_dir, std::cout);
      return out.threshold_exceeded ? 4 : 0;
    }
  } catch (const tabprep::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code_for(err.code());
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}
