#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "tabprep/core.hpp"
#include "tabprep/csv.hpp"

namespace tabprep {

struct IngestOptions {
  bool empty_is_missing = true;
  // Pair tasks: when both side tables are given, the dataset path is a pairs
  // file (left_id,right_id[,label]). Without them it is a single table whose
  // columns carry left_/right_ prefixes.
  std::optional<std::filesystem::path> left_table;
  std::optional<std::filesystem::path> right_table;
  // Key column for pairs-file references into the side tables. When unset,
  // references use "<source>:<row>" row ids. A named key column is dropped
  // from record cells so dataset ids never appear in prompts.
  std::optional<std::string> id_column;
};

namespace detail {

inline std::optional<std::string> cell_value(std::string raw, bool empty_is_missing) {
  if (empty_is_missing && raw.empty()) return std::nullopt;
  return raw;
}

inline Record row_to_record(const CsvTable& table, std::size_t row_idx, bool empty_is_missing) {
  Record rec;
  rec.id = table.source + ":" + std::to_string(row_idx);
  rec.cells.reserve(table.header.size());
  for (std::size_t c = 0; c < table.header.size(); ++c)
    rec.cells.push_back({table.header[c], cell_value(table.rows[row_idx][c], empty_is_missing)});
  return rec;
}

inline Record reshape_for_schema_matching(Record rec, const std::string& context) {
  Record out;
  out.id = std::move(rec.id);
  for (const char* want : {"name", "description"}) {
    const Cell* c = rec.find(want);
    if (!c)
      raise(Errc::UnknownAttribute,
            context + ": schema-matching records need a '" + std::string(want) + "' column");
    out.cells.push_back(*c);
  }
  return out;
}

inline Label parse_boolean_label(std::string_view tok, const std::string& context) {
  if (tok == "1") return Label::boolean(true);
  if (tok == "0") return Label::boolean(false);
  raise(Errc::UnknownLabelToken,
        context + ": expected label '0' or '1', got '" + std::string(tok) + "'");
}

// Loads one side table for a pair task, keyed for pairs-file lookups.
inline std::unordered_map<std::string, Record> load_side_table(const std::filesystem::path& path,
                                                               const Task& task,
                                                               const IngestOptions& opt) {
  CsvTable table = read_csv_table(path);
  std::unordered_map<std::string, Record> by_key;
  by_key.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    Record rec = row_to_record(table, r, opt.empty_is_missing);
    std::string key = rec.id;
    if (opt.id_column) {
      const Cell* c = rec.find(*opt.id_column);
      if (!c)
        raise(Errc::UnknownAttribute,
              path.string() + ": id column '" + *opt.id_column + "' not in header");
      if (!c->value)
        raise(Errc::MalformedRow,
              path.string() + ": row " + std::to_string(r) + " has empty id value");
      key = *c->value;
      std::erase_if(rec.cells, [&](const Cell& cell) { return cell.name == *opt.id_column; });
    }
    if (task.kind == TaskKind::SchemaMatching)
      rec = reshape_for_schema_matching(std::move(rec), path.string());
    if (!by_key.emplace(key, std::move(rec)).second)
      raise(Errc::MalformedRow, path.string() + ": duplicate id value '" + key + "'");
  }
  return by_key;
}

inline std::vector<DataInstance> load_pairs_from_two_tables(const std::filesystem::path& pairs_path,
                                                            const Task& task,
                                                            const IngestOptions& opt) {
  auto left = load_side_table(*opt.left_table, task, opt);
  auto right = load_side_table(*opt.right_table, task, opt);
  auto rows = read_csv_rows(pairs_path, 2, 3);
  std::string source = pairs_path.filename().string();

  std::vector<DataInstance> out;
  out.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto context = pairs_path.string() + ": row " + std::to_string(r);
    auto li = left.find(rows[r][0]);
    if (li == left.end())
      raise(Errc::MalformedRow, context + " references unknown left id '" + rows[r][0] + "'");
    auto ri = right.find(rows[r][1]);
    if (ri == right.end())
      raise(Errc::MalformedRow, context + " references unknown right id '" + rows[r][1] + "'");
    DataInstance inst;
    inst.id = source + ":" + std::to_string(r);
    inst.payload = payload_for(task.kind);
    inst.left = li->second;
    inst.right = ri->second;
    if (rows[r].size() == 3) inst.gold = parse_boolean_label(trim_view(rows[r][2]), context);
    out.push_back(std::move(inst));
  }
  return out;
}

inline std::vector<DataInstance> load_pairs_from_prefixed_table(const std::filesystem::path& path,
                                                                const Task& task,
                                                                const IngestOptions& opt) {
  CsvTable table = read_csv_table(path);
  std::vector<std::pair<std::size_t, std::string>> left_cols, right_cols;
  std::optional<std::size_t> label_col;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const std::string& h = table.header[c];
    if (h.rfind("left_", 0) == 0)
      left_cols.emplace_back(c, h.substr(5));
    else if (h.rfind("right_", 0) == 0)
      right_cols.emplace_back(c, h.substr(6));
    else if (h == "label")
      label_col = c;
    else
      raise(Errc::ConfigError, path.string() + ": column '" + h +
                                   "' is neither left_/right_ prefixed nor 'label'");
  }
  if (left_cols.empty() || right_cols.empty())
    raise(Errc::ConfigError, path.string() + ": prefixed pair table needs left_* and right_* columns");

  std::vector<DataInstance> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    DataInstance inst;
    inst.id = table.source + ":" + std::to_string(r);
    inst.payload = payload_for(task.kind);
    inst.left.id = inst.id + ":left";
    for (auto& [c, name] : left_cols)
      inst.left.cells.push_back({name, cell_value(table.rows[r][c], opt.empty_is_missing)});
    Record right;
    right.id = inst.id + ":right";
    for (auto& [c, name] : right_cols)
      right.cells.push_back({name, cell_value(table.rows[r][c], opt.empty_is_missing)});
    if (task.kind == TaskKind::SchemaMatching) {
      inst.left = reshape_for_schema_matching(std::move(inst.left), path.string());
      right = reshape_for_schema_matching(std::move(right), path.string());
    }
    inst.right = std::move(right);
    if (label_col)
      inst.gold = parse_boolean_label(trim_view(table.rows[r][*label_col]),
                                      path.string() + ": row " + std::to_string(r));
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace detail

/// Loads a dataset for `task` from `path` in file order. Tuple tasks read a
/// single headered table; pair tasks read either a pairs file plus two side
/// tables or one left_/right_ prefixed table (IngestOptions selects).
/// Instance ids are "<source file name>:<0-based row index>".
inline std::vector<DataInstance> load_dataset(const std::filesystem::path& path, const Task& task,
                                              const IngestOptions& opt = {}) {
  task.validate();
  if (task.pair_input()) {
    if (opt.left_table.has_value() != opt.right_table.has_value())
      raise(Errc::ConfigError, "pair ingestion needs both side tables or neither");
    return opt.left_table ? detail::load_pairs_from_two_tables(path, task, opt)
                          : detail::load_pairs_from_prefixed_table(path, task, opt);
  }

  CsvTable table = read_csv_table(path);
  if (task.needs_target()) {
    bool found = false;
    for (const auto& h : table.header) found |= (h == *task.target_attribute);
    if (!found)
      raise(Errc::MissingTargetAttribute, path.string() + ": target attribute '" +
                                              *task.target_attribute + "' not in header");
  }
  std::vector<DataInstance> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    DataInstance inst;
    inst.payload = PayloadKind::Tuple;
    inst.left = detail::row_to_record(table, r, opt.empty_is_missing);
    inst.id = inst.left.id;
    out.push_back(std::move(inst));
  }
  return out;
}

/// Loads a two-column (id,label) file. Boolean tasks accept only "0"/"1";
/// DI label text is kept verbatim beyond surrounding-whitespace trimming.
inline std::map<std::string, Label> load_labels(const std::filesystem::path& path,
                                                const Task& task) {
  auto rows = read_csv_rows(path, 2, 2);
  std::map<std::string, Label> out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string_view raw = trim_view(rows[r][1]);
    Label label = task.boolean_answer()
                      ? detail::parse_boolean_label(raw, path.string() + ": row " + std::to_string(r))
                      : Label::value(std::string(raw));
    out.insert_or_assign(rows[r][0], std::move(label));
  }
  return out;
}

/// Restricts every record of the instance to the kept attributes, preserving
/// their original relative order. The gold label is untouched.
inline DataInstance project_features(const DataInstance& inst, const std::set<std::string>& keep,
                                     const Task& task) {
  if (task.needs_target() && !keep.count(*task.target_attribute))
    raise(Errc::TargetAttributeDropped,
          "feature selection must keep target attribute '" + *task.target_attribute + "'");

  auto project = [&](const Record& rec) {
    for (const auto& name : keep)
      if (!rec.has(name))
        raise(Errc::UnknownAttribute,
              "record " + rec.id + " has no attribute '" + name + "'");
    Record out;
    out.id = rec.id;
    for (const auto& c : rec.cells)
      if (keep.count(c.name)) out.cells.push_back(c);
    return out;
  };

  DataInstance out = inst;
  out.left = project(inst.left);
  if (inst.right) out.right = project(*inst.right);
  return out;
}

/// Validation pass: every instance's payload variant must agree with the task.
inline void validate_instances(const std::vector<DataInstance>& instances, const Task& task) {
  for (const auto& inst : instances) {
    if (!inst.matches(task))
      raise(Errc::PayloadTaskMismatch,
            "instance " + inst.id + " payload does not match task " + task_kind_name(task.kind));
    if (task.kind == TaskKind::SchemaMatching) {
      for (const Record* rec : {&inst.left, &*inst.right})
        if (rec->cells.size() != 2 || rec->cells[0].name != "name" ||
            rec->cells[1].name != "description")
          raise(Errc::PayloadTaskMismatch,
                "instance " + inst.id + " SM record must have exactly name, description");
    }
  }
}

}  // namespace tabprep
