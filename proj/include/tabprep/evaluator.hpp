#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tabprep/core.hpp"
#include "tabprep/response_parser.hpp"

namespace tabprep {

/// Disjoint per-instance outcome counts. tp..tn count parsed unambiguous
/// boolean answers (for value tasks, tp counts exact matches and fp the
/// parsed mismatches); ambiguous and parse_failures cover the rest, so the
/// six always sum to the number of scored instances.
struct Counts {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
  long long tn = 0;
  long long ambiguous = 0;
  long long parse_failures = 0;

  long long total() const { return tp + fp + fn + tn + ambiguous + parse_failures; }
  friend bool operator==(const Counts&, const Counts&) = default;
};

/// Task metric in [0,1] fractions. Boolean tasks fill precision/recall/f1;
/// value tasks fill accuracy. degenerate marks a zero denominator that was
/// scored as 0.
struct Metrics {
  bool is_accuracy = false;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;
};

/// What the run observed for one instance: the parsed answer, or nothing
/// when the batch response failed to parse.
struct InstanceOutcome {
  std::string id;
  std::optional<ParsedAnswer> answer;
};

/// Value equality for imputation scoring: ASCII case-insensitive with all
/// whitespace runs collapsed to single spaces and ends trimmed.
inline bool di_values_equal(std::string_view a, std::string_view b) {
  auto canon = [](std::string_view s) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : s) {
      if (std::isspace(c)) {
        pending_space = !out.empty();
        continue;
      }
      if (pending_space) {
        out += ' ';
        pending_space = false;
      }
      out += static_cast<char>(std::tolower(c));
    }
    return out;
  };
  return canon(a) == canon(b);
}

struct ScoreResult {
  Counts counts;
  Metrics metrics;
};

/// Scores outcomes against gold labels. Unparsed and ambiguous answers are
/// kept in the denominators and treated as wrong predictions of the gold's
/// negation, so boolean metrics see them as misses (gold yes) or false
/// alarms (gold no). Zero metric denominators score 0 and set degenerate.
inline ScoreResult score(const std::vector<InstanceOutcome>& outcomes,
                         const std::map<std::string, Label>& gold, const Task& task) {
  ScoreResult res;
  long long eff_tp = 0, eff_fp = 0, eff_fn = 0;
  long long correct = 0;

  for (const auto& out : outcomes) {
    auto it = gold.find(out.id);
    if (it == gold.end())
      raise(Errc::MissingGold, "no gold label for instance " + out.id);
    const Label& g = it->second;
    if (!g.matches_task(task))
      raise(Errc::MissingGold, "gold label for " + out.id + " has the wrong kind for task " +
                                   task_kind_name(task.kind));

    if (task.boolean_answer()) {
      bool gold_pos = g.as_boolean();
      std::optional<bool> pred;
      if (!out.answer) {
        ++res.counts.parse_failures;
      } else if (!out.answer->normalized) {
        ++res.counts.ambiguous;
      } else {
        pred = out.answer->normalized->as_boolean();
      }
      if (!pred) {
        // Scored as the wrong call: a miss on positives, a false alarm on
        // negatives.
        (gold_pos ? eff_fn : eff_fp) += 1;
        continue;
      }
      if (*pred && gold_pos) ++res.counts.tp, ++eff_tp;
      else if (*pred && !gold_pos) ++res.counts.fp, ++eff_fp;
      else if (!*pred && gold_pos) ++res.counts.fn, ++eff_fn;
      else ++res.counts.tn;
    } else {
      if (!out.answer || !out.answer->normalized) {
        ++res.counts.parse_failures;
        continue;
      }
      if (di_values_equal(out.answer->normalized->as_value(), g.as_value())) {
        ++res.counts.tp;
        ++correct;
      } else {
        ++res.counts.fp;
      }
    }
  }

  if (task.boolean_answer()) {
    long long p_den = eff_tp + eff_fp;
    long long r_den = eff_tp + eff_fn;
    res.metrics.degenerate = (p_den == 0 || r_den == 0);
    res.metrics.precision = p_den ? static_cast<double>(eff_tp) / static_cast<double>(p_den) : 0.0;
    res.metrics.recall = r_den ? static_cast<double>(eff_tp) / static_cast<double>(r_den) : 0.0;
    double pr = res.metrics.precision + res.metrics.recall;
    res.metrics.f1 = pr > 0.0 ? 2.0 * res.metrics.precision * res.metrics.recall / pr : 0.0;
  } else {
    res.metrics.is_accuracy = true;
    long long n = static_cast<long long>(outcomes.size());
    res.metrics.degenerate = (n == 0);
    res.metrics.accuracy = n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  }
  return res;
}

/// Renders a [0,1] fraction as a percentage with one decimal, the precision
/// used in the reports.
inline std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", fraction * 100.0);
  return buf;
}

/// Amortized prompt-token prediction for batch size B over N questions:
/// every question pays its own q tokens, and each of the ceil(N/B) prompts
/// repeats the I shared instruction tokens.
inline long long predicted_prompt_tokens(long long n, long long batch_size, long long q,
                                         long long i) {
  if (n <= 0) return 0;
  if (batch_size <= 0) raise(Errc::ConfigError, "batch size must be >= 1");
  long long prompts = (n + batch_size - 1) / batch_size;
  return n * q + prompts * i;
}

// ---------------------------------------------------------------------------
// Ablation grid
// ---------------------------------------------------------------------------

/// Prompt-component subset for one ablation run. The task specification is
/// the base configuration and is always on.
struct AblationComponents {
  bool few_shots = false;
  bool batching = false;
  bool reasoning = false;

  std::string name() const {
    std::string out = "ZS-T";
    if (few_shots) out += "+FS";
    if (batching) out += "+B";
    if (reasoning) out += "+ZS-R";
    return out;
  }

  friend bool operator==(const AblationComponents&, const AblationComponents&) = default;
};

/// The six standard grid rows, weakest to strongest configuration.
inline std::vector<AblationComponents> default_ablation_grid() {
  return {
      {false, false, false},
      {false, true, false},
      {false, true, true},
      {true, false, false},
      {true, true, false},
      {true, true, true},
  };
}

inline AblationComponents parse_ablation_components(std::string_view text) {
  AblationComponents c;
  bool saw_base = false;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t plus = text.find('+', start);
    std::string_view part = trim_view(
        text.substr(start, plus == std::string_view::npos ? std::string_view::npos : plus - start));
    if (part == "ZS-T") saw_base = true;
    else if (part == "FS") c.few_shots = true;
    else if (part == "B") c.batching = true;
    else if (part == "ZS-R") c.reasoning = true;
    else if (!part.empty())
      raise(Errc::ConfigError, "unknown ablation component '" + std::string(part) + "'");
    if (plus == std::string_view::npos) break;
    start = plus + 1;
  }
  if (!saw_base)
    raise(Errc::ConfigError, "ablation rows must include the base ZS-T component");
  return c;
}

}  // namespace tabprep
