#include "comve/corpus_io.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "comve/csv.hpp"
#include "comve/error.hpp"

namespace comve {
namespace {

constexpr const char* kModule = "corpus_io";

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::vector<csv::Record> read_records(const fs::path& path, char delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(kModule, "cannot open " + path.string());
  return csv::read(in, delimiter, path.string());
}

struct Table {
  std::vector<std::string> header;
  std::vector<csv::Record> rows;

  std::size_t column(const std::string& name, const fs::path& path) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw ParseError(kModule, path.string() + ":1: missing column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  }
};

// Without a header the columns are positional: id first, then the declared
// columns in order.
Table read_table(const fs::path& path, const ColumnMap& map,
                 const std::vector<std::string>& positional) {
  Table table;
  table.rows = read_records(path, map.delimiter);
  if (map.data_header) {
    if (table.rows.empty()) return table;
    table.header = table.rows.front().fields;
    for (auto& h : table.header) h = trim(h);
    table.rows.erase(table.rows.begin());
  } else {
    table.header = positional;
  }
  for (const auto& row : table.rows) {
    if (row.fields.size() != table.header.size()) {
      throw ParseError(kModule, path.string() + ":" + std::to_string(row.line) + ": expected " +
                                    std::to_string(table.header.size()) + " fields, found " +
                                    std::to_string(row.fields.size()));
    }
  }
  return table;
}

std::string required_text(const csv::Record& row, std::size_t col, const fs::path& path,
                          const std::string& column_name) {
  std::string value = trim(row.fields[col]);
  if (value.empty()) {
    throw ParseError(kModule, path.string() + ":" + std::to_string(row.line) + ": empty '" +
                                  column_name + "'");
  }
  return value;
}

std::unordered_map<std::string, int> answers_by_id(const fs::path& path, const ColumnMap& map) {
  std::unordered_map<std::string, int> out;
  for (const auto& rec : load_answers(path, map)) out.emplace(rec.id, rec.predicted_label);
  return out;
}

template <typename Example>
void check_answer_coverage(const std::vector<Example>& examples,
                           const std::unordered_map<std::string, int>& answers,
                           const fs::path& answers_path) {
  std::unordered_set<std::string> data_ids;
  for (const auto& ex : examples) data_ids.insert(ex.id);
  std::vector<std::string> extra;
  for (const auto& [id, label] : answers) {
    if (!data_ids.count(id)) extra.push_back(id);
  }
  if (!extra.empty()) {
    std::sort(extra.begin(), extra.end());
    std::string msg = answers_path.string() + ": ids missing from data:";
    for (std::size_t i = 0; i < extra.size() && i < 10; ++i) msg += " " + extra[i];
    throw ConsistencyError(kModule, msg);
  }
  for (const auto& ex : examples) {
    if (!answers.count(ex.id)) {
      throw ConsistencyError(kModule, answers_path.string() + ": no answer for id " + ex.id);
    }
  }
}

}  // namespace

std::optional<int> StatementPair::gold_against_index() const {
  if (!gold_sensible_index) return std::nullopt;
  return 3 - *gold_sensible_index;
}

ColumnMap ColumnMap::validation_default() { return ColumnMap{}; }

ColumnMap ColumnMap::explanation_default() {
  ColumnMap map;
  map.label_names = {"A", "B", "C"};
  map.labels_mark_against = false;
  return map;
}

std::string ColumnMap::to_external(int internal_label) const {
  if (internal_label < 1 || internal_label > label_count()) {
    throw ValueError(kModule, "label " + std::to_string(internal_label) + " outside 1.." +
                                  std::to_string(label_count()));
  }
  return label_names[static_cast<std::size_t>(internal_label - 1)];
}

int ColumnMap::to_internal(std::string_view external_label) const {
  const std::string label = trim(external_label);
  for (std::size_t i = 0; i < label_names.size(); ++i) {
    if (label_names[i] == label) return static_cast<int>(i) + 1;
  }
  throw ValueError(kModule, "label '" + label + "' is not in the declared label mapping");
}

std::string trim(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && is_space(text[b])) ++b;
  while (e > b && is_space(text[e - 1])) --e;
  return std::string(text.substr(b, e - b));
}

std::size_t count_whitespace_tokens(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (char c : text) {
    if (is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

std::string normalize_statement(std::string_view text) {
  std::string t = trim(text);
  if (!t.empty() && (t.back() == '.' || t.back() == '?' || t.back() == '!')) t.pop_back();
  std::string out;
  bool pending_space = false;
  for (char c : t) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string resolve_true_statement(const ExplanationExample& example, const StatementPair& pair) {
  if (example.id != pair.id) {
    throw ResolutionError(kModule, "pair id " + pair.id + " does not match example " + example.id);
  }
  const std::string target = normalize_statement(example.false_statement);
  const bool m1 = normalize_statement(pair.s1) == target;
  const bool m2 = normalize_statement(pair.s2) == target;
  if (m1 && !m2) return pair.s2;
  if (m2 && !m1) return pair.s1;
  throw ResolutionError(kModule, "cannot resolve true statement for " + example.id);
}

std::vector<StatementPair> load_validation_set(const fs::path& data_path,
                                               const std::optional<fs::path>& answers_path,
                                               const ColumnMap& map) {
  if (map.statement_columns.size() != 2) {
    throw ValueError(kModule, "validation layout needs exactly two statement columns");
  }
  std::vector<std::string> positional = {map.id_column};
  positional.insert(positional.end(), map.statement_columns.begin(), map.statement_columns.end());
  const Table table = read_table(data_path, map, positional);

  std::vector<StatementPair> pairs;
  if (table.rows.empty()) {
    if (answers_path) check_answer_coverage(pairs, answers_by_id(*answers_path, map), *answers_path);
    return pairs;
  }
  const std::size_t id_col = table.column(map.id_column, data_path);
  const std::size_t c1 = table.column(map.statement_columns[0], data_path);
  const std::size_t c2 = table.column(map.statement_columns[1], data_path);

  std::unordered_set<std::string> seen;
  pairs.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    StatementPair pair;
    pair.id = required_text(row, id_col, data_path, map.id_column);
    pair.s1 = required_text(row, c1, data_path, map.statement_columns[0]);
    pair.s2 = required_text(row, c2, data_path, map.statement_columns[1]);
    if (!seen.insert(pair.id).second) {
      throw ConsistencyError(kModule, data_path.string() + ":" + std::to_string(row.line) +
                                          ": duplicate id " + pair.id);
    }
    pairs.push_back(std::move(pair));
  }

  if (answers_path) {
    const auto answers = answers_by_id(*answers_path, map);
    check_answer_coverage(pairs, answers, *answers_path);
    for (auto& pair : pairs) {
      const int label = answers.at(pair.id);
      if (label < 1 || label > 2) {
        throw ValueError(kModule, "validation label for " + pair.id + " must map to 1 or 2");
      }
      pair.gold_sensible_index = map.labels_mark_against ? 3 - label : label;
    }
  }
  return pairs;
}

std::vector<ExplanationExample> load_explanation_set(
    const fs::path& data_path, const std::optional<fs::path>& answers_path, const ColumnMap& map,
    const std::vector<StatementPair>* pair_source) {
  if (map.option_columns.size() != 3) {
    throw ParseError(kModule, "explanation layout needs exactly three option columns, got " +
                                  std::to_string(map.option_columns.size()));
  }
  std::vector<std::string> positional = {map.id_column, map.false_column};
  positional.insert(positional.end(), map.option_columns.begin(), map.option_columns.end());
  const Table table = read_table(data_path, map, positional);

  std::vector<ExplanationExample> examples;
  if (!table.rows.empty()) {
    const std::size_t id_col = table.column(map.id_column, data_path);
    const std::size_t false_col = table.column(map.false_column, data_path);
    std::array<std::size_t, 3> option_cols{};
    for (std::size_t k = 0; k < 3; ++k) {
      option_cols[k] = table.column(map.option_columns[k], data_path);
    }

    std::unordered_map<std::string, const StatementPair*> pairs_by_id;
    if (pair_source) {
      for (const auto& p : *pair_source) pairs_by_id.emplace(p.id, &p);
    }

    std::unordered_set<std::string> seen;
    for (const auto& row : table.rows) {
      ExplanationExample ex;
      ex.id = required_text(row, id_col, data_path, map.id_column);
      ex.false_statement = required_text(row, false_col, data_path, map.false_column);
      for (std::size_t k = 0; k < 3; ++k) {
        ex.options[k] = required_text(row, option_cols[k], data_path, map.option_columns[k]);
      }
      if (!seen.insert(ex.id).second) {
        throw ConsistencyError(kModule, data_path.string() + ":" + std::to_string(row.line) +
                                            ": duplicate id " + ex.id);
      }
      if (auto it = pairs_by_id.find(ex.id); it != pairs_by_id.end()) {
        try {
          ex.true_statement = resolve_true_statement(ex, *it->second);
        } catch (const ResolutionError&) {
          // left empty; callers fall back to the context-free template
        }
      }
      examples.push_back(std::move(ex));
    }
  }

  if (answers_path) {
    const auto answers = answers_by_id(*answers_path, map);
    check_answer_coverage(examples, answers, *answers_path);
    for (auto& ex : examples) {
      const int label = answers.at(ex.id);
      if (label < 1 || label > 3) {
        throw ValueError(kModule, "explanation label for " + ex.id + " must map to 1..3");
      }
      ex.gold_option_index = label;
    }
  }
  return examples;
}

std::vector<PredictionRecord> load_answers(const fs::path& path, const ColumnMap& map) {
  auto rows = read_records(path, map.delimiter);
  if (map.answers_header && !rows.empty()) rows.erase(rows.begin());
  std::vector<PredictionRecord> out;
  out.reserve(rows.size());
  std::unordered_set<std::string> seen;
  for (const auto& row : rows) {
    if (row.fields.size() != 2) {
      throw ParseError(kModule, path.string() + ":" + std::to_string(row.line) +
                                    ": expected 'id,label', found " +
                                    std::to_string(row.fields.size()) + " fields");
    }
    PredictionRecord rec;
    rec.id = trim(row.fields[0]);
    if (rec.id.empty()) {
      throw ParseError(kModule, path.string() + ":" + std::to_string(row.line) + ": empty id");
    }
    try {
      rec.predicted_label = map.to_internal(row.fields[1]);
    } catch (const ValueError& e) {
      throw ValueError(kModule, path.string() + ":" + std::to_string(row.line) + ": " + e.what());
    }
    if (!seen.insert(rec.id).second) {
      throw ConsistencyError(kModule, path.string() + ":" + std::to_string(row.line) +
                                          ": duplicate id " + rec.id);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_predictions(const std::vector<PredictionRecord>& records, const fs::path& path,
                       const ColumnMap& map) {
  if (records.empty()) throw ValueError(kModule, "no predictions to write");
  std::unordered_set<std::string> seen;
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& rec : records) {
    if (!seen.insert(rec.id).second) {
      throw ConsistencyError(kModule, "duplicate prediction id " + rec.id);
    }
    lines.push_back(csv::escape(rec.id, map.delimiter) + map.delimiter +
                    csv::escape(map.to_external(rec.predicted_label), map.delimiter));
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(kModule, "cannot write " + path.string());
  if (map.answers_header) out << "id" << map.delimiter << "label\n";
  for (const auto& line : lines) out << line << '\n';
  if (!out) throw IoError(kModule, "write failed for " + path.string());
}

SentenceStream::SentenceStream(const fs::path& path, std::size_t min_tokens)
    : in_(path), min_tokens_(min_tokens) {
  if (!in_) throw IoError(kModule, "cannot open corpus " + path.string());
}

std::optional<std::string> SentenceStream::next() {
  std::string line;
  while (std::getline(in_, line)) {
    std::string sentence = trim(line);
    if (sentence.empty()) continue;
    if (count_whitespace_tokens(sentence) < min_tokens_) continue;
    return sentence;
  }
  if (in_.bad()) throw IoError(kModule, "read failure in corpus");
  return std::nullopt;
}

std::vector<std::string> load_omcs_corpus(const fs::path& path, std::size_t min_tokens) {
  SentenceStream stream(path, min_tokens);
  std::vector<std::string> out;
  while (auto s = stream.next()) out.push_back(std::move(*s));
  return out;
}

}  // namespace comve
