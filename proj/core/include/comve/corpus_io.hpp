#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Typed records for the commonsense validation (A) and explanation selection
// (B) task files, the OMCS plain-text corpus, and the answer-file format.
namespace comve {

namespace fs = std::filesystem;

// One validation example. gold_sensible_index is the 1-based index of the
// statement that makes sense (not the task answer, which is its complement).
struct StatementPair {
  std::string id;
  std::string s1;
  std::string s2;
  std::optional<int> gold_sensible_index;

  const std::string& statement(int index) const { return index == 1 ? s1 : s2; }
  // The task answer: 1-based index of the against-commonsense statement.
  std::optional<int> gold_against_index() const;

  friend bool operator==(const StatementPair&, const StatementPair&) = default;
};

struct ExplanationExample {
  std::string id;
  std::string false_statement;
  std::optional<std::string> true_statement;
  std::array<std::string, 3> options;
  std::optional<int> gold_option_index;  // 1..3

  friend bool operator==(const ExplanationExample&, const ExplanationExample&) = default;
};

struct PredictionRecord {
  std::string id;
  int predicted_label = 0;

  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
  friend auto operator<=>(const PredictionRecord&, const PredictionRecord&) = default;
};

// Declares the on-disk layout of task files and the bidirectional label
// mapping. Internal labels are 1-based indices (the against-commonsense
// statement for A, the option for B); label_names[i] is the external spelling
// of internal label i + 1.
struct ColumnMap {
  char delimiter = ',';
  bool data_header = true;
  bool answers_header = false;
  std::string id_column = "id";
  std::vector<std::string> statement_columns = {"sent0", "sent1"};
  std::string false_column = "FalseSent";
  std::vector<std::string> option_columns = {"OptionA", "OptionB", "OptionC"};
  std::vector<std::string> label_names = {"0", "1"};
  // When true, an external validation label names the against-commonsense
  // statement; otherwise it names the commonsensible one.
  bool labels_mark_against = true;

  static ColumnMap validation_default();
  static ColumnMap explanation_default();

  int label_count() const { return static_cast<int>(label_names.size()); }
  std::string to_external(int internal_label) const;
  int to_internal(std::string_view external_label) const;  // throws ValueError
};

std::vector<StatementPair> load_validation_set(const fs::path& data_path,
                                               const std::optional<fs::path>& answers_path,
                                               const ColumnMap& column_map);

std::vector<ExplanationExample> load_explanation_set(
    const fs::path& data_path, const std::optional<fs::path>& answers_path,
    const ColumnMap& column_map,
    const std::vector<StatementPair>* pair_source = nullptr);

// Answer or prediction file ("id,label" rows) with labels converted to the
// internal convention. Order preserved; duplicate ids are a consistency error.
std::vector<PredictionRecord> load_answers(const fs::path& path, const ColumnMap& column_map);

void write_predictions(const std::vector<PredictionRecord>& records, const fs::path& path,
                       const ColumnMap& label_map);

// Trim, drop one terminal '.', '?' or '!', collapse internal whitespace.
std::string normalize_statement(std::string_view text);

// Returns the member of `pair` that is not the example's false statement.
// Throws ResolutionError when neither (or both) statements match.
std::string resolve_true_statement(const ExplanationExample& example, const StatementPair& pair);

std::string trim(std::string_view text);
std::size_t count_whitespace_tokens(std::string_view text);

// Lazily reads an OMCS-style corpus: one sentence per line, trimmed, blank
// lines and lines with fewer than min_tokens whitespace tokens dropped.
class SentenceStream {
 public:
  SentenceStream(const fs::path& path, std::size_t min_tokens);

  std::optional<std::string> next();

 private:
  std::ifstream in_;
  std::size_t min_tokens_;
};

std::vector<std::string> load_omcs_corpus(const fs::path& path, std::size_t min_tokens);

}  // namespace comve
