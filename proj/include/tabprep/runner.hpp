#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "tabprep/batching.hpp"
#include "tabprep/config.hpp"
#include "tabprep/contextualize.hpp"
#include "tabprep/core.hpp"
#include "tabprep/dataset.hpp"
#include "tabprep/embed.hpp"
#include "tabprep/embed_remote.hpp"
#include "tabprep/evaluator.hpp"
#include "tabprep/fewshot.hpp"
#include "tabprep/gateway.hpp"
#include "tabprep/prompt.hpp"
#include "tabprep/response_parser.hpp"

namespace tabprep {

struct LoadedData {
  std::vector<DataInstance> instances;
  std::map<std::string, Label> gold;
  std::vector<FewShotExample> few_shots;
};

/// Loads dataset, gold labels, and few-shot examples per the config,
/// applying the feature keep-list when one is given. Inline pair labels are
/// merged into the gold map first, so a labels file can extend or override
/// them.
inline LoadedData load_run_inputs(const RunConfig& c) {
  c.validate();
  LoadedData data;
  IngestOptions opt;
  opt.left_table = c.left_table;
  opt.right_table = c.right_table;
  opt.id_column = c.id_column;
  data.instances = load_dataset(c.dataset, c.task, opt);

  for (const auto& inst : data.instances)
    if (inst.gold) data.gold.insert_or_assign(inst.id, *inst.gold);
  if (c.labels)
    for (auto& [id, label] : load_labels(*c.labels, c.task)) data.gold.insert_or_assign(id, label);

  if (!c.keep_attributes.empty()) {
    std::set<std::string> keep(c.keep_attributes.begin(), c.keep_attributes.end());
    for (auto& inst : data.instances) inst = project_features(inst, keep, c.task);
  }
  validate_instances(data.instances, c.task);

  if (c.use_few_shots()) {
    data.few_shots = load_few_shots(*c.few_shot_file, c.task, data.instances);
    if (data.few_shots.empty())
      raise(Errc::EmptyFewShots, c.few_shot_file->string() + " contains no examples");
    if (data.few_shots.size() > c.effective_shots()) data.few_shots.resize(c.effective_shots());
  }
  return data;
}

inline PromptConfig prompt_config_for(const RunConfig& c, const LoadedData& data) {
  PromptConfig pc;
  pc.task = c.task;
  pc.reasoning_enabled = c.reasoning;
  pc.few_shots = data.few_shots;
  pc.type_hint = c.type_hint;
  pc.confirm_target = c.confirm_target;
  return pc;
}

struct PlannedBatch {
  std::size_t index = 0;
  std::vector<DataInstance> instances;
  PromptBundle bundle;
  ChatRequest request;
  std::string hash;
};

struct RunPlan {
  BatchPlan plan;
  std::size_t clusters_used = 0;  // 0 when mode is random
  std::vector<PlannedBatch> batches;
};

/// Plans batches and assembles one prompt per batch. Cluster mode embeds
/// every instance first (remote endpoint when configured, the offline
/// hashed embedder otherwise).
inline RunPlan plan_and_assemble(const RunConfig& c, const LoadedData& data) {
  if (data.instances.empty())
    raise(Errc::ConfigError, c.dataset.string() + " holds no data instances");
  std::vector<std::string> ids;
  ids.reserve(data.instances.size());
  std::unordered_map<std::string, const DataInstance*> by_id;
  for (const auto& inst : data.instances) {
    ids.push_back(inst.id);
    if (!by_id.emplace(inst.id, &inst).second)
      raise(Errc::ConfigError, "duplicate instance id " + inst.id);
  }

  RunPlan rp;
  if (c.batch_mode == BatchMode::Random) {
    rp.plan = plan_random(ids, c.batch_size, c.seed);
  } else {
    std::vector<EmbeddingVector> vectors;
    vectors.reserve(data.instances.size());
    if (c.embed_url) {
      RemoteEmbedder remote(*c.embed_url, c.embed_dimension);
      std::vector<std::string> texts;
      texts.reserve(data.instances.size());
      for (const auto& inst : data.instances) texts.push_back(embedding_text(inst, c.task));
      vectors = remote.embed_many(texts);
    } else {
      HashedBagEmbedder embedder(c.embed_dimension);
      for (const auto& inst : data.instances)
        vectors.push_back(embed_instance(inst, c.task, embedder));
    }
    std::size_t k = c.clusters ? *c.clusters
                               : default_cluster_count(data.instances.size(), c.batch_size);
    if (k > data.instances.size()) k = data.instances.size();
    rp.clusters_used = k;
    rp.plan = plan_cluster(ids, vectors, c.batch_size, k, c.seed);
  }

  PromptConfig pc = prompt_config_for(c, data);
  for (std::size_t b = 0; b < rp.plan.batches.size(); ++b) {
    PlannedBatch pb;
    pb.index = b;
    for (const auto& id : rp.plan.batches[b]) pb.instances.push_back(*by_id.at(id));
    pb.bundle = assemble(pc, pb.instances);
    pb.request.model = c.model;
    pb.request.messages = pb.bundle.messages;
    pb.request.temperature = c.temperature;
    pb.request.max_tokens = c.max_tokens;
    pb.hash = request_hash(pb.request);
    rp.batches.push_back(std::move(pb));
  }
  return rp;
}

namespace detail {

inline std::string batch_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "batch_%04zu.txt", index);
  return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(Errc::IoError, "cannot write " + path.string());
  out << content;
}

inline json plan_to_json(const RunPlan& rp) {
  json j;
  j["mode"] = batch_mode_name(rp.plan.mode);
  j["seed"] = static_cast<long long>(rp.plan.seed);
  j["batch_size"] = static_cast<long long>(rp.plan.batch_size);
  if (rp.clusters_used > 0) j["clusters"] = static_cast<long long>(rp.clusters_used);
  j["batches"] = json::array();
  for (const auto& b : rp.plan.batches) j["batches"].push_back(b);
  return j;
}

/// Writes the artifacts every run directory must carry before any backend
/// traffic: resolved config, batch plan, and the rendered prompts.
inline void persist_preflight(const RunConfig& c, const RunPlan& rp) {
  std::filesystem::create_directories(c.out_dir / "prompts");
  write_text_file(c.out_dir / "config.json", config_to_json(c).dump(2) + "\n");
  write_text_file(c.out_dir / "plan.json", plan_to_json(rp).dump(2) + "\n");
  for (const auto& pb : rp.batches)
    write_text_file(c.out_dir / "prompts" / batch_file_name(pb.index), render_bundle(pb.bundle));
}

// Per-instance scripted mock answers: reason and answer lines keyed by id.
struct MockAnswer {
  std::string reason;
  std::string answer;
};

inline std::unordered_map<std::string, MockAnswer> load_mock_answers(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::IoError, "cannot open mock answers file " + path.string());
  std::unordered_map<std::string, MockAnswer> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (trim_view(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j.contains("answer"))
      raise(Errc::ConfigError,
            path.string() + ":" + std::to_string(lineno) + ": need {id, answer[, reason]}");
    MockAnswer a;
    a.answer = j.at("answer").get<std::string>();
    a.reason = j.value("reason", std::string("Scripted reasoning."));
    out.insert_or_assign(j.at("id").get<std::string>(), std::move(a));
  }
  return out;
}

inline std::string default_mock_answer(const Task& task) {
  return task.boolean_answer() ? "yes" : "unknown";
}

inline std::string mock_content_for(const PromptBundle& bundle, const Task& task, bool reasoning,
                                    const std::unordered_map<std::string, MockAnswer>& answers) {
  std::string content;
  for (std::size_t k = 0; k < bundle.instance_ids.size(); ++k) {
    if (k) content += '\n';
    content += "Answer " + std::to_string(k + 1) + ":\n";
    auto it = answers.find(bundle.instance_ids[k]);
    std::string reason = it != answers.end() ? it->second.reason : "Scripted reasoning.";
    std::string answer = it != answers.end() ? it->second.answer : default_mock_answer(task);
    if (reasoning) {
      content += reason;
      content += '\n';
    }
    content += answer;
  }
  return content;
}

}  // namespace detail

struct BatchParseFailure {
  std::size_t batch_index = 0;
  ParseFailureKind kind = ParseFailureKind::UnparseableBlock;
  std::string detail;
};

struct RunOutcome {
  json report;
  ScoreResult scores;
  std::vector<BatchParseFailure> failures;
  double parse_failure_rate = 0.0;
  bool threshold_exceeded = false;
  long long network_calls = 0;
};

/// Prints the batch plan and writes all prompts without touching any
/// backend. Returns the planned batch count.
inline std::size_t cmd_dry_run(const RunConfig& c, std::ostream& log) {
  LoadedData data = load_run_inputs(c);
  RunPlan rp = plan_and_assemble(c, data);
  detail::persist_preflight(c, rp);
  log << "planned " << rp.batches.size() << " batch(es) over " << data.instances.size()
      << " instance(s), mode " << batch_mode_name(rp.plan.mode);
  if (rp.clusters_used > 0) log << " (" << rp.clusters_used << " clusters)";
  log << "\n";
  for (const auto& pb : rp.batches)
    log << "  batch " << pb.index << ": " << pb.instances.size() << " question(s)\n";
  log << "prompts written to " << (c.out_dir / "prompts").string() << "\n";
  return rp.batches.size();
}

/// Byte-compares every file the run wrote under prompts/ against the same
/// names in a golden directory. Returns the names that differ or are absent.
inline std::vector<std::string> compare_prompts_with_golden(
    const std::filesystem::path& prompts_dir, const std::filesystem::path& golden_dir) {
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(prompts_dir))
    if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  std::vector<std::string> mismatches;
  for (const auto& name : names) {
    std::filesystem::path golden = golden_dir / name;
    if (!std::filesystem::exists(golden)) {
      mismatches.push_back(name + " (missing from golden directory)");
      continue;
    }
    if (read_file_bytes(prompts_dir / name) != read_file_bytes(golden))
      mismatches.push_back(name);
  }
  return mismatches;
}

/// Executes the full pipeline: load, plan, prompt, send, parse, score,
/// persist. Batches already present in the run directory's own transcript
/// are reused instead of re-sent, which is both crash resume and free
/// re-evaluation.
inline RunOutcome cmd_run(const RunConfig& c, std::ostream& log) {
  auto wall_begin = std::chrono::steady_clock::now();
  LoadedData data = load_run_inputs(c);

  if (auto range = recommended_batch_range(c.model)) {
    if (c.batch_size < range->first || c.batch_size > range->second)
      log << "warning: batch size " << c.batch_size << " outside the recommended ["
          << range->first << ", " << range->second << "] for " << c.model << "\n";
  }

  RunPlan rp = plan_and_assemble(c, data);
  detail::persist_preflight(c, rp);

  // Resume: responses already in this run directory's transcript are final.
  std::filesystem::path own_transcript = c.out_dir / "transcript.jsonl";
  TranscriptStore resume;
  if (std::filesystem::exists(own_transcript)) resume = TranscriptStore::load(own_transcript);

  std::shared_ptr<Backend> backend;
  HttpBackend* http = nullptr;
  switch (c.backend) {
    case BackendKind::Mock: {
      std::unordered_map<std::string, detail::MockAnswer> answers;
      if (c.mock_answers) answers = detail::load_mock_answers(*c.mock_answers);
      std::unordered_map<std::string, std::string> scripted;
      for (const auto& pb : rp.batches)
        scripted[pb.hash] = detail::mock_content_for(pb.bundle, c.task, c.reasoning, answers);
      backend = std::make_shared<MockBackend>([scripted](const ChatRequest& req) {
        auto it = scripted.find(request_hash(req));
        if (it == scripted.end())
          raise(Errc::ConfigError, "mock backend received an unplanned request");
        return it->second;
      });
      break;
    }
    case BackendKind::Replay:
      backend = std::make_shared<ReplayBackend>(TranscriptStore::load(*c.replay_transcript));
      break;
    case BackendKind::Http: {
      auto h = std::make_shared<HttpBackend>(c.base_url, c.api_key());
      http = h.get();
      backend = h;
      break;
    }
  }

  CostMeter meter(c.prices);
  TranscriptWriter recorder(own_transcript);
  std::unique_ptr<RateLimiter> limiter;
  if (c.requests_per_minute && c.tokens_per_minute)
    limiter = std::make_unique<RateLimiter>(*c.requests_per_minute, *c.tokens_per_minute);
  RetryPolicy retry;
  retry.max_attempts = c.max_attempts;
  retry.jitter_seed = c.seed;
  ChatClient client(backend, meter, retry, limiter.get(), &recorder);

  // Dispatch. Responses land indexed by batch so assembly order is fixed
  // regardless of worker interleaving.
  std::vector<std::string> contents(rp.batches.size());
  std::vector<bool> completed(rp.batches.size(), false);
  std::mutex manifest_mu;
  auto write_manifest = [&] {
    json m;
    m["total_batches"] = static_cast<long long>(rp.batches.size());
    json done = json::array();
    for (std::size_t i = 0; i < completed.size(); ++i)
      if (completed[i]) done.push_back(static_cast<long long>(i));
    m["completed"] = std::move(done);
    detail::write_text_file(c.out_dir / "manifest.json", m.dump(2) + "\n");
  };

  auto process_batch = [&](std::size_t i) {
    const PlannedBatch& pb = rp.batches[i];
    if (const TranscriptEntry* prior = resume.lookup(pb.hash)) {
      contents[i] = prior->content;
      meter.add(prior->prompt_tokens, prior->completion_tokens);
    } else {
      contents[i] = client.send(pb.request).content;
    }
    std::lock_guard<std::mutex> lock(manifest_mu);
    completed[i] = true;
    write_manifest();
  };

  if (c.workers <= 1) {
    for (std::size_t i = 0; i < rp.batches.size(); ++i) process_batch(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    std::size_t n_workers = std::min(c.workers, rp.batches.size());
    for (std::size_t w = 0; w < n_workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i = next.fetch_add(1);
          if (i >= rp.batches.size()) return;
          try {
            process_batch(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!first_error) first_error = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  // Parse and route answers back to instances in plan order.
  RunOutcome outcome;
  std::vector<InstanceOutcome> outcomes;
  long long unparsed_instances = 0;
  for (std::size_t i = 0; i < rp.batches.size(); ++i) {
    const PlannedBatch& pb = rp.batches[i];
    ParseResult pr = parse_batch_response(contents[i], pb.bundle.question_count, c.task,
                                          c.reasoning, c.strictness);
    if (pr.ok()) {
      for (std::size_t k = 0; k < pr.answers.size(); ++k)
        outcomes.push_back({pb.bundle.instance_ids[k], pr.answers[k]});
    } else {
      outcome.failures.push_back({pb.index, pr.failure->kind, pr.failure->detail});
      for (const auto& id : pb.bundle.instance_ids) outcomes.push_back({id, std::nullopt});
      unparsed_instances += static_cast<long long>(pb.bundle.instance_ids.size());
    }
  }

  outcome.scores = score(outcomes, data.gold, c.task);
  outcome.parse_failure_rate =
      static_cast<double>(unparsed_instances) / static_cast<double>(data.instances.size());
  outcome.threshold_exceeded = outcome.parse_failure_rate > c.parse_failure_threshold;
  outcome.network_calls = http ? http->network_calls() : 0;

  auto wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                     std::chrono::steady_clock::now() - wall_begin)
                     .count();

  json r;
  r["task"] = task_kind_name(c.task.kind);
  r["target_attribute"] =
      c.task.target_attribute ? json(*c.task.target_attribute) : json(nullptr);
  r["model"] = c.model;
  r["backend"] = backend_kind_name(c.backend);
  r["batch_size"] = static_cast<long long>(c.batch_size);
  r["batch_mode"] = batch_mode_name(c.batch_mode);
  r["seed"] = static_cast<long long>(c.seed);
  r["clusters"] = rp.clusters_used > 0 ? json(static_cast<long long>(rp.clusters_used)) : json(nullptr);
  r["reasoning"] = c.reasoning;
  r["few_shots_used"] = static_cast<long long>(data.few_shots.size());
  r["strictness"] = c.strictness == ParseStrictness::Strict ? "strict" : "tolerant";
  r["instances"] = static_cast<long long>(data.instances.size());
  r["batches"] = static_cast<long long>(rp.batches.size());
  r["network_calls"] = outcome.network_calls;
  const Metrics& m = outcome.scores.metrics;
  if (m.is_accuracy) {
    r["metric"] = json{{"kind", "accuracy"}, {"accuracy", m.accuracy}};
    r["percent"] = json{{"accuracy", format_percent(m.accuracy)}};
  } else {
    r["metric"] = json{{"kind", "f1"},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1}};
    r["percent"] = json{{"precision", format_percent(m.precision)},
                        {"recall", format_percent(m.recall)},
                        {"f1", format_percent(m.f1)}};
  }
  const Counts& ct = outcome.scores.counts;
  r["counts"] = json{{"tp", ct.tp},        {"fp", ct.fp},
                     {"fn", ct.fn},        {"tn", ct.tn},
                     {"ambiguous", ct.ambiguous}, {"parse_failures", ct.parse_failures}};
  json fails = json::array();
  for (const auto& f : outcome.failures)
    fails.push_back(json{{"batch", static_cast<long long>(f.batch_index)},
                         {"kind", parse_failure_kind_name(f.kind)},
                         {"detail", f.detail}});
  r["batch_parse_failures"] = std::move(fails);
  r["parse_failure_rate"] = outcome.parse_failure_rate;
  r["tokens"] = json{{"prompt", meter.prompt_tokens()}, {"completion", meter.completion_tokens()}};
  r["cost_nano"] = meter.total_cost_nano();
  r["degenerate_metric"] = m.degenerate;
  r["config_fingerprint"] = config_fingerprint(c);
  r["wall_time_ms"] = static_cast<long long>(wall_ms);
  outcome.report = std::move(r);

  detail::write_text_file(c.out_dir / "report.json", outcome.report.dump(2) + "\n");

  std::string txt;
  txt += "task: " + std::string(task_kind_name(c.task.kind)) + "\n";
  txt += "model: " + c.model + " (" + backend_kind_name(c.backend) + ")\n";
  txt += "instances: " + std::to_string(data.instances.size()) +
         ", batches: " + std::to_string(rp.batches.size()) + "\n";
  if (m.is_accuracy) {
    txt += "accuracy: " + format_percent(m.accuracy) + "%\n";
  } else {
    txt += "precision: " + format_percent(m.precision) + "%, recall: " +
           format_percent(m.recall) + "%, f1: " + format_percent(m.f1) + "%\n";
  }
  txt += "counts: tp=" + std::to_string(ct.tp) + " fp=" + std::to_string(ct.fp) +
         " fn=" + std::to_string(ct.fn) + " tn=" + std::to_string(ct.tn) +
         " ambiguous=" + std::to_string(ct.ambiguous) +
         " parse_failures=" + std::to_string(ct.parse_failures) + "\n";
  txt += "tokens: prompt=" + std::to_string(meter.prompt_tokens()) +
         " completion=" + std::to_string(meter.completion_tokens()) + "\n";
  txt += "cost_nano: " + std::to_string(meter.total_cost_nano()) + "\n";
  // Ambiguous and unparsed answers stay in the denominator, scored as the
  // wrong call relative to gold.
  detail::write_text_file(c.out_dir / "report.txt", txt);
  log << txt;
  return outcome;
}

// ---------------------------------------------------------------------------
// Cost preview
// ---------------------------------------------------------------------------

struct EstimateRow {
  std::size_t batch_size = 0;
  long long prompts = 0;
  long long prompt_tokens = 0;
  long long cost_nano_total = 0;
};

struct EstimateResult {
  long long instances = 0;
  long long instruction_tokens = 0;     // I: shared per-prompt overhead
  long long question_tokens_total = 0;  // sum of per-question estimates
  std::vector<EstimateRow> rows;
};

/// Predicts prompt tokens per candidate batch size with the amortization
/// model sum(q_i) + ceil(N/B) * I. Every question is priced at position 1;
/// longer indices in real prompts add bytes the model deliberately ignores.
/// No backend is contacted.
inline EstimateResult cmd_estimate(const RunConfig& c, const std::vector<std::size_t>& sizes,
                                   std::ostream& log) {
  LoadedData data = load_run_inputs(c);
  EstimateResult res;
  res.instances = static_cast<long long>(data.instances.size());

  PromptConfig pc = prompt_config_for(c, data);
  res.instruction_tokens = estimate_tokens(kPersona) + estimate_tokens(build_zero_shot(pc));
  if (!pc.few_shots.empty())
    for (const auto& msg : build_few_shot_block(pc))
      res.instruction_tokens += estimate_tokens(msg.content);
  for (const auto& inst : data.instances)
    res.question_tokens_total += estimate_tokens(detail::question_line(inst, c.task, 1));

  log << "instances: " << res.instances << ", instruction tokens (I): " << res.instruction_tokens
      << ", question tokens (sum q): " << res.question_tokens_total << "\n";
  log << "batch_size  prompts  prompt_tokens  cost_nano\n";
  for (std::size_t b : sizes) {
    if (b == 0) raise(Errc::ConfigError, "batch size must be >= 1");
    EstimateRow row;
    row.batch_size = b;
    row.prompts = res.instances > 0
                      ? (res.instances + static_cast<long long>(b) - 1) / static_cast<long long>(b)
                      : 0;
    row.prompt_tokens = res.question_tokens_total + row.prompts * res.instruction_tokens;
    row.cost_nano_total = cost_nano(row.prompt_tokens, c.prices.prompt_micro_per_1k);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%10zu  %7lld  %13lld  %9lld\n", row.batch_size, row.prompts,
                  row.prompt_tokens, row.cost_nano_total);
    log << buf;
    res.rows.push_back(row);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

struct AblationCell {
  AblationComponents components;
  json report;
  bool threshold_exceeded = false;
};

inline std::string ablation_dir_name(const AblationComponents& comp) {
  std::string name = to_lower_ascii(comp.name());
  for (char& ch : name)
    if (ch == '+') ch = '_';
  return name;
}

/// Runs one full pipeline per grid row, varying only the prompt components:
/// few-shots on/off, batch prompting (configured size vs 1), reasoning
/// on/off. Seeds and data are shared across rows.
inline std::vector<AblationCell> cmd_ablate(const RunConfig& base,
                                            const std::vector<AblationComponents>& grid,
                                            std::ostream& log) {
  base.validate();
  std::vector<AblationCell> cells;
  for (const auto& comp : grid) {
    if (comp.few_shots && !base.few_shot_file)
      raise(Errc::ConfigError, "grid row " + comp.name() + " needs a few-shot sidecar file");
    RunConfig c = base;
    c.reasoning = comp.reasoning;
    c.batch_size = comp.batching ? base.batch_size : 1;
    if (!comp.few_shots) c.few_shot_file.reset();
    c.out_dir = base.out_dir / "ablation" / ablation_dir_name(comp);

    log << "== " << comp.name() << " ==\n";
    RunOutcome out = cmd_run(c, log);
    cells.push_back({comp, out.report, out.threshold_exceeded});
  }

  // Grid summary, one row per component subset.
  std::string csv = "components,metric,percent,prompt_tokens,completion_tokens,cost_nano\n";
  json grid_json = json::array();
  for (const auto& cell : cells) {
    const json& rep = cell.report;
    std::string kind = rep.at("metric").at("kind").get<std::string>();
    std::string pct = rep.at("percent").at(kind == "accuracy" ? "accuracy" : "f1").get<std::string>();
    csv += cell.components.name() + "," + kind + "," + pct + "," +
           std::to_string(rep.at("tokens").at("prompt").get<long long>()) + "," +
           std::to_string(rep.at("tokens").at("completion").get<long long>()) + "," +
           std::to_string(rep.at("cost_nano").get<long long>()) + "\n";
    grid_json.push_back(json{{"components", cell.components.name()}, {"report", rep}});
  }
  std::filesystem::create_directories(base.out_dir);
  detail::write_text_file(base.out_dir / "grid.csv", csv);
  detail::write_text_file(base.out_dir / "grid.json", grid_json.dump(2) + "\n");
  log << csv;
  return cells;
}

/// Re-scores a finished run from its own directory: same resolved config,
/// responses replayed from the run's transcript, report rewritten in place.
inline RunOutcome cmd_evaluate(const std::filesystem::path& run_dir, std::ostream& log) {
  RunConfig c = load_config_file(run_dir / "config.json");
  c.out_dir = run_dir;
  std::filesystem::path transcript = run_dir / "transcript.jsonl";
  if (!std::filesystem::exists(transcript))
    raise(Errc::IoError, "run directory has no transcript: " + transcript.string());
  c.backend = BackendKind::Replay;
  c.replay_transcript = transcript;
  return cmd_run(c, log);
}

}  // namespace tabprep
