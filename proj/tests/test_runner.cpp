#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "support/temp_dir.hpp"
#include "tabprep/config.hpp"
#include "tabprep/runner.hpp"

using namespace tabprep;
using tabprep::testing::fixture_dir;
using tabprep::testing::TempDir;

namespace {

RunConfig restaurant_config(const std::filesystem::path& out_dir) {
  RunConfig c;
  c.task = Task::data_imputation("city");
  c.dataset = fixture_dir() / "restaurant.csv";
  c.labels = fixture_dir() / "restaurant_labels.csv";
  c.few_shot_file = fixture_dir() / "restaurant_fewshot.jsonl";
  c.shots = 1;
  c.batch_size = 2;
  c.seed = 3;  // keeps the two rows in file order after the shuffle
  c.backend = BackendKind::Mock;
  c.out_dir = out_dir;
  return c;
}

RunConfig em20_config(const std::filesystem::path& out_dir) {
  RunConfig c;
  c.task = Task::entity_matching();
  c.dataset = fixture_dir() / "em20" / "pairs.csv";
  c.left_table = fixture_dir() / "em20" / "tableA.csv";
  c.right_table = fixture_dir() / "em20" / "tableB.csv";
  c.id_column = "id";
  c.mock_answers = fixture_dir() / "em20" / "mock_answers.jsonl";
  c.model = "gpt-4";
  c.batch_size = 5;
  c.seed = 42;
  c.prices = PriceTable{1500, 2000};
  c.backend = BackendKind::Mock;
  c.out_dir = out_dir;
  return c;
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

json stripped_report(json report) {
  report.erase("wall_time_ms");
  return report;
}

int run_cli(const std::string& args, const std::filesystem::path& log) {
  std::string cmd = std::string(TABPREP_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("a scripted imputation run scores and persists everything") {
  TempDir tmp;
  RunConfig c = restaurant_config(tmp.path() / "run");
  c.mock_answers = tmp.write("answers.jsonl",
                             "{\"id\": \"restaurant.csv:0\", \"reason\": \"Area code 310.\", "
                             "\"answer\": \"Los Angeles\"}\n"
                             "{\"id\": \"restaurant.csv:1\", \"reason\": \"Area code 818.\", "
                             "\"answer\": \"Studio City\"}\n");
  std::ostringstream log;
  RunOutcome out = cmd_run(c, log);

  CHECK(out.scores.counts.tp == 2);
  CHECK(out.scores.counts.total() == 2);
  CHECK(out.scores.metrics.is_accuracy);
  CHECK(out.scores.metrics.accuracy == 1.0);
  CHECK(out.failures.empty());
  CHECK_FALSE(out.threshold_exceeded);
  CHECK(out.network_calls == 0);

  CHECK(out.report.at("task") == "data_imputation");
  CHECK(out.report.at("target_attribute") == "city");
  CHECK(out.report.at("instances") == 2);
  CHECK(out.report.at("batches") == 1);
  CHECK(out.report.at("few_shots_used") == 1);
  CHECK(out.report.at("percent").at("accuracy") == "100.0");
  CHECK(out.report.at("metric").at("kind") == "accuracy");

  for (const char* name :
       {"config.json", "plan.json", "report.json", "report.txt", "transcript.jsonl",
        "manifest.json"})
    CHECK(std::filesystem::exists(c.out_dir / name));
  CHECK(std::filesystem::exists(c.out_dir / "prompts" / "batch_0000.txt"));

  json manifest = json::parse(read_file_bytes(c.out_dir / "manifest.json"));
  CHECK(manifest.at("total_batches") == 1);
  CHECK(manifest.at("completed") == json::array({0}));

  // The persisted prompt is the handcrafted golden one.
  CHECK(read_file_bytes(c.out_dir / "prompts" / "batch_0000.txt") ==
        read_file_bytes(fixture_dir() / "golden" / "di_restaurant_prompt.txt"));
}

TEST_CASE("dry runs compare prompts against a golden directory") {
  TempDir tmp;
  RunConfig c = restaurant_config(tmp.path() / "dry");
  std::ostringstream log;
  CHECK(cmd_dry_run(c, log) == 1);
  CHECK_FALSE(std::filesystem::exists(c.out_dir / "transcript.jsonl"));

  std::string golden = read_file_bytes(fixture_dir() / "golden" / "di_restaurant_prompt.txt");
  tmp.write("golden/batch_0000.txt", golden);
  CHECK(compare_prompts_with_golden(c.out_dir / "prompts", tmp.path() / "golden").empty());

  tmp.write("tweaked/batch_0000.txt", golden + "x");
  auto mismatches = compare_prompts_with_golden(c.out_dir / "prompts", tmp.path() / "tweaked");
  REQUIRE(mismatches.size() == 1);
  CHECK(mismatches[0] == "batch_0000.txt");

  auto missing = compare_prompts_with_golden(c.out_dir / "prompts", tmp.path() / "nowhere");
  REQUIRE(missing.size() == 1);
  CHECK(missing[0].find("missing") != std::string::npos);
}

TEST_CASE("an all-yes entity matcher lands at the expected confusion") {
  TempDir tmp;
  std::string table = "left_title,right_title,label\n";
  for (int i = 0; i < 5; ++i)
    table += "item " + std::to_string(i) + ",item " + std::to_string(i) + ",1\n";
  for (int i = 0; i < 5; ++i)
    table += "thing " + std::to_string(i) + ",other " + std::to_string(i) + ",0\n";

  RunConfig c;
  c.task = Task::entity_matching();
  c.dataset = tmp.write("pairs.csv", table);
  c.batch_size = 10;
  c.seed = 1;
  c.backend = BackendKind::Mock;  // no answers file: every answer is "yes"
  c.out_dir = tmp.path() / "run";

  std::ostringstream log;
  RunOutcome out = cmd_run(c, log);
  CHECK(out.scores.counts == Counts{5, 5, 0, 0, 0, 0});
  CHECK(out.report.at("percent").at("precision") == "50.0");
  CHECK(out.report.at("percent").at("recall") == "100.0");
  CHECK(out.report.at("percent").at("f1") == "66.7");
  CHECK_FALSE(out.report.at("degenerate_metric").get<bool>());
}

TEST_CASE("the em20 fixture run hits its constructed confusion table") {
  TempDir tmp;
  RunConfig c = em20_config(tmp.path() / "run");
  std::ostringstream log;
  RunOutcome out = cmd_run(c, log);

  CHECK(out.scores.counts == Counts{8, 1, 2, 9, 0, 0});
  CHECK(out.report.at("percent").at("precision") == "88.9");
  CHECK(out.report.at("percent").at("recall") == "80.0");
  CHECK(out.report.at("percent").at("f1") == "84.2");
  CHECK(out.report.at("instances") == 20);
  CHECK(out.report.at("batches") == 4);
  CHECK(out.report.at("counts").at("tp") == 8);
  CHECK(line_count(c.out_dir / "transcript.jsonl") == 4);

  // Integer cost accounting: tokens times micro-price per 1k.
  long long prompt_tokens = out.report.at("tokens").at("prompt").get<long long>();
  long long completion_tokens = out.report.at("tokens").at("completion").get<long long>();
  CHECK(out.report.at("cost_nano").get<long long>() ==
        prompt_tokens * 1500 + completion_tokens * 2000);
}

TEST_CASE("a second run over the same directory resumes from the transcript") {
  TempDir tmp;
  RunConfig c = em20_config(tmp.path() / "run");
  std::ostringstream log1, log2;
  RunOutcome first = cmd_run(c, log1);
  auto transcript = c.out_dir / "transcript.jsonl";
  std::size_t lines_after_first = line_count(transcript);
  CHECK(lines_after_first == 4);

  RunOutcome second = cmd_run(c, log2);
  // Nothing is re-sent, so nothing is re-recorded.
  CHECK(line_count(transcript) == lines_after_first);
  CHECK(stripped_report(second.report) == stripped_report(first.report));
}

TEST_CASE("evaluate replays a finished run without new traffic") {
  TempDir tmp;
  RunConfig c = em20_config(tmp.path() / "run");
  std::ostringstream log1, log2;
  RunOutcome original = cmd_run(c, log1);

  RunOutcome replayed = cmd_evaluate(c.out_dir, log2);
  CHECK(replayed.network_calls == 0);
  CHECK(replayed.report.at("backend") == "replay");

  json a = stripped_report(original.report);
  json b = stripped_report(replayed.report);
  a.erase("backend");
  b.erase("backend");
  CHECK(a == b);

  CHECK_THROWS_AS(cmd_evaluate(tmp.path() / "not-a-run", log2), Error);
}

TEST_CASE("unparseable batches trip the failure threshold") {
  TempDir tmp;
  RunConfig c = em20_config(tmp.path() / "run");
  // One scripted answer smuggles in an extra header line, which poisons its
  // whole five-question batch.
  c.mock_answers = tmp.write("poison.jsonl",
                             "{\"id\": \"pairs.csv:0\", \"answer\": \"yes\\nAnswer 99: no\"}\n");
  c.parse_failure_threshold = 0.10;
  std::ostringstream log;
  RunOutcome out = cmd_run(c, log);
  REQUIRE(out.failures.size() == 1);
  CHECK(out.failures[0].kind == ParseFailureKind::ExtraAnswers);
  CHECK(out.parse_failure_rate == Catch::Approx(5.0 / 20.0));
  CHECK(out.threshold_exceeded);
  CHECK(out.scores.counts.parse_failures == 5);
  CHECK(out.scores.counts.total() == 20);

  // A looser threshold tolerates the same run.
  RunConfig relaxed = em20_config(tmp.path() / "run2");
  relaxed.mock_answers = c.mock_answers;
  relaxed.parse_failure_threshold = 0.5;
  CHECK_FALSE(cmd_run(relaxed, log).threshold_exceeded);
}

TEST_CASE("cluster mode plans through the embedder and reports k") {
  TempDir tmp;
  RunConfig c = em20_config(tmp.path() / "run");
  c.batch_mode = BatchMode::Cluster;
  c.clusters = 3;
  std::ostringstream log;
  RunOutcome out = cmd_run(c, log);
  CHECK(out.report.at("batch_mode") == "cluster");
  CHECK(out.report.at("clusters") == 3);
  CHECK(out.report.at("instances") == 20);
  CHECK(out.scores.counts.total() == 20);
  // The confusion table is batching-invariant: every id keeps its answer.
  CHECK(out.scores.counts == Counts{8, 1, 2, 9, 0, 0});

  json plan = json::parse(read_file_bytes(c.out_dir / "plan.json"));
  CHECK(plan.at("mode") == "cluster");
  CHECK(plan.at("clusters") == 3);
  std::size_t covered = 0;
  for (const auto& batch : plan.at("batches")) covered += batch.size();
  CHECK(covered == 20);
}

TEST_CASE("estimates follow the amortized token model exactly") {
  TempDir tmp;
  RunConfig c = restaurant_config(tmp.path() / "est");
  c.prices.prompt_micro_per_1k = 1000;
  std::ostringstream log;
  EstimateResult res = cmd_estimate(c, {1, 2}, log);

  // Recompute the two model constants from the public prompt builders.
  Task di = Task::data_imputation("city");
  auto dataset = load_dataset(c.dataset, di);
  auto shots = load_few_shots(*c.few_shot_file, di, dataset);
  shots.resize(1);
  PromptConfig pc;
  pc.task = di;
  pc.few_shots = shots;
  long long overhead = estimate_tokens(kPersona) + estimate_tokens(build_zero_shot(pc));
  for (const auto& msg : build_few_shot_block(pc)) overhead += estimate_tokens(msg.content);
  long long questions = 0;
  for (const auto& inst : dataset)
    questions += estimate_tokens(detail::question_line(inst, di, 1));

  CHECK(res.instances == 2);
  CHECK(res.instruction_tokens == overhead);
  CHECK(res.question_tokens_total == questions);
  REQUIRE(res.rows.size() == 2);
  CHECK(res.rows[0].prompts == 2);
  CHECK(res.rows[0].prompt_tokens == questions + 2 * overhead);
  CHECK(res.rows[1].prompts == 1);
  CHECK(res.rows[1].prompt_tokens == questions + 1 * overhead);
  CHECK(res.rows[0].cost_nano_total == res.rows[0].prompt_tokens * 1000);
  CHECK(res.rows[1].prompt_tokens < res.rows[0].prompt_tokens);
  CHECK_THROWS_AS(cmd_estimate(c, {0}, log), Error);
}

TEST_CASE("the ablation grid varies exactly the prompt components") {
  TempDir tmp;
  RunConfig base = em20_config(tmp.path() / "grid");
  base.few_shot_file = tmp.write(
      "em_shots.jsonl",
      "{\"left\": {\"title\": \"norton antivirus\"}, \"right\": {\"title\": \"norton "
      "antivirus retail\"}, \"reason\": \"Same product line and edition.\", \"answer\": "
      "\"yes\"}\n"
      "{\"left\": {\"title\": \"flash 8\"}, \"right\": {\"title\": \"fireworks 8\"}, "
      "\"reason\": \"Different applications.\", \"answer\": \"no\"}\n");

  std::ostringstream log;
  auto cells = cmd_ablate(base, default_ablation_grid(), log);
  REQUIRE(cells.size() == 6);

  CHECK(cells[0].report.at("batch_size") == 1);       // ZS-T
  CHECK(cells[0].report.at("reasoning") == false);
  CHECK(cells[0].report.at("few_shots_used") == 0);
  CHECK(cells[1].report.at("batch_size") == 5);       // ZS-T+B
  CHECK(cells[2].report.at("reasoning") == true);     // ZS-T+B+ZS-R
  CHECK(cells[3].report.at("few_shots_used") == 2);   // ZS-T+FS
  CHECK(cells[3].report.at("batch_size") == 1);
  CHECK(cells[5].report.at("batch_size") == 5);       // ZS-T+FS+B+ZS-R
  CHECK(cells[5].report.at("reasoning") == true);
  CHECK(cells[5].report.at("few_shots_used") == 2);

  // Every row scores the full dataset; the scripted answers don't change.
  for (const auto& cell : cells) {
    CHECK(cell.report.at("instances") == 20);
    CHECK(cell.report.at("percent").at("f1") == "84.2");
  }

  for (const char* dir : {"zs-t", "zs-t_b", "zs-t_b_zs-r", "zs-t_fs", "zs-t_fs_b",
                          "zs-t_fs_b_zs-r"})
    CHECK(std::filesystem::exists(base.out_dir / "ablation" / dir / "report.json"));

  CHECK(std::filesystem::exists(base.out_dir / "grid.csv"));
  CHECK(line_count(base.out_dir / "grid.csv") == 7);  // header plus six rows
  json grid_json = json::parse(read_file_bytes(base.out_dir / "grid.json"));
  CHECK(grid_json.size() == 6);
  CHECK(grid_json[0].at("components") == "ZS-T");

  RunConfig no_shots = em20_config(tmp.path() / "grid2");
  CHECK_THROWS_AS(cmd_ablate(no_shots, default_ablation_grid(), log), Error);
}

TEST_CASE("mock answer files must be JSON lines with id and answer") {
  TempDir tmp;
  CHECK_THROWS_AS(detail::load_mock_answers(tmp.path() / "absent.jsonl"), Error);
  auto bad = tmp.write("bad.jsonl", "{\"id\": \"x\"}\n");
  CHECK_THROWS_AS(detail::load_mock_answers(bad), Error);
  auto good = tmp.write("good.jsonl", "{\"id\": \"x\", \"answer\": \"yes\"}\n");
  auto answers = detail::load_mock_answers(good);
  CHECK(answers.at("x").answer == "yes");
  CHECK(answers.at("x").reason == "Scripted reasoning.");
}

TEST_CASE("configs round-trip through JSON and reject unknown keys") {
  TempDir tmp;
  RunConfig c = em20_config(tmp.path() / "run");
  c.clusters = 2;
  c.type_hint.reset();
  json j = config_to_json(c);
  RunConfig back = config_from_json(j);
  CHECK(back.task.kind == TaskKind::EntityMatching);
  CHECK(back.dataset == c.dataset);
  CHECK(back.id_column == c.id_column);
  CHECK(back.batch_size == 5);
  CHECK(back.seed == 42);
  CHECK(back.clusters == 2);
  CHECK(back.prices.prompt_micro_per_1k == 1500);
  CHECK(config_fingerprint(back) == config_fingerprint(c));

  json unknown = j;
  unknown["zzz"] = 1;
  CHECK_THROWS_AS(config_from_json(unknown), Error);
  json wrong_type = j;
  wrong_type["batch_size"] = "five";
  CHECK_THROWS_AS(config_from_json(wrong_type), Error);

  // The fingerprint tracks prompt-shaping knobs, not file locations.
  RunConfig moved = c;
  moved.out_dir = tmp.path() / "elsewhere";
  CHECK(config_fingerprint(moved) == config_fingerprint(c));
  RunConfig reseeded = c;
  reseeded.seed = 7;
  CHECK(config_fingerprint(reseeded) != config_fingerprint(c));
}

TEST_CASE("config validation rejects out-of-range knobs") {
  TempDir tmp;
  RunConfig c = restaurant_config(tmp.path() / "x");
  CHECK_NOTHROW(c.validate());
  RunConfig bad = c;
  bad.temperature = 3.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.parse_failure_threshold = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.backend = BackendKind::Http;
  CHECK_THROWS_AS(bad.validate(), Error);  // no base_url
  bad = c;
  bad.backend = BackendKind::Replay;
  CHECK_THROWS_AS(bad.validate(), Error);  // no transcript
  bad = c;
  bad.type_hint = "hint";
  CHECK_NOTHROW(bad.validate());
  bad.task = Task::entity_matching();
  CHECK_THROWS_AS(bad.validate(), Error);  // hints are imputation-only

  CHECK(recommended_batch_range("gpt-3.5-turbo") == std::make_pair<std::size_t, std::size_t>(10, 20));
  CHECK(recommended_batch_range("GPT-4") == std::make_pair<std::size_t, std::size_t>(10, 15));
  CHECK(recommended_batch_range("gpt-4o-mini") == std::make_pair<std::size_t, std::size_t>(5, 10));
  CHECK_FALSE(recommended_batch_range("llama").has_value());
}

TEST_CASE("the command line maps outcomes to exit codes") {
  TempDir tmp;
  json cfg = config_to_json(em20_config(tmp.path() / "cli-run"));
  auto cfg_path = tmp.write("em20.json", cfg.dump(2) + "\n");

  CHECK(run_cli("run --config " + cfg_path.string(), tmp.path() / "log1.txt") == 0);
  CHECK(std::filesystem::exists(tmp.path() / "cli-run" / "report.json"));

  // Golden mismatch: compare against a directory with a corrupted copy.
  std::string golden = read_file_bytes(fixture_dir() / "golden" / "di_restaurant_prompt.txt");
  tmp.write("golden-bad/batch_0000.txt", golden + "drift");
  json dry_cfg = config_to_json(restaurant_config(tmp.path() / "cli-dry"));
  auto dry_path = tmp.write("dry.json", dry_cfg.dump(2) + "\n");
  CHECK(run_cli("dry-run --config " + dry_path.string() + " --golden " +
                    (tmp.path() / "golden-bad").string(),
                tmp.path() / "log2.txt") == 1);
  tmp.write("golden-good/batch_0000.txt", golden);
  CHECK(run_cli("dry-run --config " + dry_path.string() + " --golden " +
                    (tmp.path() / "golden-good").string(),
                tmp.path() / "log3.txt") == 0);

  // Config errors exit 2.
  auto bad_cfg = tmp.write("bad.json", "{\"task\": \"em\", \"zzz\": 1}\n");
  CHECK(run_cli("run --config " + bad_cfg.string(), tmp.path() / "log4.txt") == 2);

  // Backend errors exit 3: a replay store with no matching entry.
  json replay_cfg = config_to_json(em20_config(tmp.path() / "cli-replay"));
  replay_cfg["backend"] = "replay";
  replay_cfg["replay_transcript"] = tmp.write("empty.jsonl", "").string();
  auto replay_path = tmp.write("replay.json", replay_cfg.dump(2) + "\n");
  CHECK(run_cli("run --config " + replay_path.string(), tmp.path() / "log5.txt") == 3);

  // Parse failures beyond the threshold exit 4.
  json poison_cfg = config_to_json(em20_config(tmp.path() / "cli-poison"));
  poison_cfg["mock_answers"] =
      tmp.write("poison.jsonl",
                "{\"id\": \"pairs.csv:0\", \"answer\": \"yes\\nAnswer 99: no\"}\n")
          .string();
  auto poison_path = tmp.write("poison.json", poison_cfg.dump(2) + "\n");
  CHECK(run_cli("run --config " + poison_path.string(), tmp.path() / "log6.txt") == 4);

  // Evaluate over the finished run directory from the first scenario.
  CHECK(run_cli("evaluate --run-dir " + (tmp.path() / "cli-run").string(),
                tmp.path() / "log7.txt") == 0);

  // Flags override config-file keys.
  CHECK(run_cli("run --config " + cfg_path.string() + " --out " +
                    (tmp.path() / "cli-run-b").string() + " --seed 7",
                tmp.path() / "log8.txt") == 0);
  json rerun = json::parse(read_file_bytes(tmp.path() / "cli-run-b" / "report.json"));
  CHECK(rerun.at("seed") == 7);
}
