#pragma once

#include <string>
#include <vector>

#include "tabprep/contextualize.hpp"
#include "tabprep/core.hpp"

namespace tabprep {

/// A manually labeled demonstration: the instance as shown to the model,
/// the reasoning line, and the answer line. Reason and answer must each be
/// a single nonempty line.
struct FewShotExample {
  DataInstance instance;
  std::string reason;
  std::string answer;

  void validate(const Task& task) const {
    if (!instance.matches(task))
      raise(Errc::PayloadTaskMismatch,
            "few-shot instance " + instance.id + " does not match task " +
                task_kind_name(task.kind));
    auto check = [&](const char* field, const std::string& text) {
      if (trim_view(text).empty())
        raise(Errc::ConfigError, "few-shot " + std::string(field) + " must be nonempty");
      if (text.find('\n') != std::string::npos || text.find('\r') != std::string::npos)
        raise(Errc::ConfigError, "few-shot " + std::string(field) + " must be a single line");
    };
    check("reason", reason);
    check("answer", answer);
  }
};

struct PromptConfig {
  Task task;
  bool reasoning_enabled = true;
  std::vector<FewShotExample> few_shots;
  std::optional<std::string> type_hint;  // DI only
  bool confirm_target = true;            // ED only

  void validate() const {
    task.validate();
    if (type_hint && task.kind != TaskKind::DataImputation)
      raise(Errc::ConfigError, "type hints apply only to data imputation");
    for (const auto& ex : few_shots) ex.validate(task);
  }
};

/// Assembled chat prompt plus the bookkeeping needed to route answers back
/// to instances: question k in the final user message asks about
/// instance_ids[k-1].
struct PromptBundle {
  std::vector<Message> messages;
  std::size_t question_count = 0;
  std::vector<std::string> instance_ids;
};

inline const std::string kPersona = "You are a database engineer.";

namespace detail {

// The one task-specific sentence in the zero-shot block.
inline std::string task_specification(const Task& task) {
  switch (task.kind) {
    case TaskKind::ErrorDetection:
      return "You are requested to detect whether there is an error in the value of the \"" +
             *task.target_attribute + "\" attribute.";
    case TaskKind::DataImputation:
      return "You are requested to infer the value of the \"" + *task.target_attribute +
             "\" attribute based on the values of other attributes.";
    case TaskKind::SchemaMatching:
      return "You are requested to determine whether two attributes refer to the same concept "
             "based on their names and descriptions.";
    case TaskKind::EntityMatching:
      return "You are requested to determine whether two records refer to the same real-world "
             "entity based on the values of their attributes.";
  }
  raise(Errc::ConfigError, "unknown task kind");
}

// What the final answer line must contain, spliced into the format rule.
inline std::string answer_target(const Task& task) {
  if (task.kind == TaskKind::DataImputation)
    return "the value of the \"" + *task.target_attribute + "\" attribute";
  return std::string("\"yes\" or \"no\"");
}

// The per-question sentence appended after the serialized record(s).
inline std::string question_sentence(const Task& task) {
  switch (task.kind) {
    case TaskKind::ErrorDetection:
      return "Is there an error in the \"" + *task.target_attribute + "\" attribute?";
    case TaskKind::DataImputation:
      return "What is the " + *task.target_attribute + "?";
    case TaskKind::SchemaMatching:
      return "Do these two attributes refer to the same concept?";
    case TaskKind::EntityMatching:
      return "Do these two records refer to the same real-world entity?";
  }
  raise(Errc::ConfigError, "unknown task kind");
}

inline std::string question_line(const DataInstance& inst, const Task& task, std::size_t number) {
  auto parts = serialize_instance(inst, task);
  std::string line = "Question " + std::to_string(number) + ": ";
  if (parts.size() == 1) {
    line += "Record is " + parts[0] + ".";
  } else if (task.kind == TaskKind::SchemaMatching) {
    line += "Attribute A is " + parts[0] + ". Attribute B is " + parts[1] + ".";
  } else {
    line += "Record A is " + parts[0] + ". Record B is " + parts[1] + ".";
  }
  line += ' ';
  line += question_sentence(task);
  return line;
}

}  // namespace detail

/// Builds the zero-shot block: task specification, answer-format rule, and
/// the task-specific trailing instructions (target confirmation for error
/// detection, the optional type hint for imputation). One sentence per line.
inline std::string build_zero_shot(const PromptConfig& config) {
  config.validate();
  std::string text = detail::task_specification(config.task);
  text += '\n';
  if (config.reasoning_enabled) {
    text += "MUST answer each question in two lines. In the first line, you give the reason "
            "for the inference. In the second line, you ONLY give " +
            detail::answer_target(config.task) + ".";
  } else {
    text += "MUST answer each question in one line. In the line, you ONLY give " +
            detail::answer_target(config.task) + ".";
  }
  if (config.task.kind == TaskKind::ErrorDetection && config.confirm_target)
    text += "\nPlease confirm the target attribute in your reason for inference.";
  if (config.type_hint) {
    text += '\n';
    text += *config.type_hint;
  }
  return text;
}

/// Builds the demonstration pair: one user message with Question 1..m lines
/// and one assistant message with the matching Answer blocks. Answer blocks
/// carry the reason line only when reasoning is enabled.
inline std::vector<Message> build_few_shot_block(const PromptConfig& config) {
  if (config.few_shots.empty())
    raise(Errc::EmptyFewShots, "few-shot block requested without examples");
  std::string questions, answers;
  for (std::size_t i = 0; i < config.few_shots.size(); ++i) {
    const FewShotExample& ex = config.few_shots[i];
    if (i) {
      questions += '\n';
      answers += '\n';
    }
    questions += detail::question_line(ex.instance, config.task, i + 1);
    answers += "Answer " + std::to_string(i + 1) + ":\n";
    if (config.reasoning_enabled) {
      answers += ex.reason;
      answers += '\n';
    }
    answers += ex.answer;
  }
  return {{Role::User, std::move(questions)}, {Role::Assistant, std::move(answers)}};
}

/// Builds the batch question block: one "Question k:" line per instance,
/// numbered densely from start_index.
inline std::string build_batch_questions(const std::vector<DataInstance>& instances,
                                         const Task& task, std::size_t start_index = 1) {
  std::string out;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (i) out += '\n';
    out += detail::question_line(instances[i], task, start_index + i);
  }
  return out;
}

/// Assembles the complete prompt: persona, zero-shot block, optional
/// few-shot pair, then the batch questions. instance_ids preserves batch
/// order so answers can be routed back.
inline PromptBundle assemble(const PromptConfig& config,
                             const std::vector<DataInstance>& batch) {
  config.validate();
  if (batch.empty()) raise(Errc::ConfigError, "cannot assemble a prompt for an empty batch");
  for (const auto& inst : batch)
    if (!inst.matches(config.task))
      raise(Errc::PayloadTaskMismatch,
            "instance " + inst.id + " does not match task " + task_kind_name(config.task.kind));

  PromptBundle bundle;
  bundle.messages.push_back({Role::System, kPersona});
  bundle.messages.push_back({Role::User, build_zero_shot(config)});
  if (!config.few_shots.empty())
    for (auto& m : build_few_shot_block(config)) bundle.messages.push_back(std::move(m));
  bundle.messages.push_back({Role::User, build_batch_questions(batch, config.task)});
  bundle.question_count = batch.size();
  for (const auto& inst : batch) bundle.instance_ids.push_back(inst.id);
  return bundle;
}

/// Plain-text rendering used for golden files and --dry-run output: each
/// message as "### <role>" followed by its content, blank line between
/// messages, trailing newline.
inline std::string render_bundle(const PromptBundle& bundle) {
  std::string out;
  for (std::size_t i = 0; i < bundle.messages.size(); ++i) {
    if (i) out += '\n';
    out += "### ";
    out += role_name(bundle.messages[i].role);
    out += '\n';
    out += bundle.messages[i].content;
    out += '\n';
  }
  return out;
}

}  // namespace tabprep
