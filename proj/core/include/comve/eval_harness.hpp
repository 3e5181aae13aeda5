#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "comve/corpus_io.hpp"

namespace comve {

enum class Split { kTrial, kDev, kTest };
inline constexpr std::array<Split, 3> kAllSplits = {Split::kTrial, Split::kDev, Split::kTest};
std::string_view to_string(Split split);
Split parse_split(std::string_view text);  // throws ArgumentError

struct RunResult {
  std::string run_id;
  std::string encoder_tag;
  std::string template_tag;
  Split split = Split::kDev;
  double accuracy = 0.0;  // fraction in [0, 1]
  std::vector<PredictionRecord> predictions;
};

using GoldLabels = std::unordered_map<std::string, int>;

GoldLabels golds_from(std::span<const StatementPair> pairs);        // against index
GoldLabels golds_from(std::span<const ExplanationExample> examples);  // option index
GoldLabels golds_from(std::span<const PredictionRecord> answers);

// Exact-match accuracy. Throws ConsistencyError listing ids absent from
// golds, ValueError on an empty prediction list.
double accuracy(std::span<const PredictionRecord> predictions, const GoldLabels& golds);

// Percent with one decimal, ties rounded half to even.
std::string format_percent(double fraction);

struct ReportRow {
  std::string encoder;
  std::string template_tag;
  std::vector<std::optional<double>> cells;  // parallel to ReportTable::splits
};

struct ReportTable {
  std::vector<Split> splits;
  std::vector<ReportRow> rows;

  std::string render_text() const;
  std::string to_json() const;
};

// Rows sorted by encoder, then template (known variants in table order);
// columns are the splits present, in trial/dev/test order.
ReportTable compare_runs(std::span<const RunResult> results);

struct Verdict {
  std::string run_id;
  bool correct = false;
  int chosen = 0;
  std::optional<char> option_letter;  // explanation runs only
};

struct CaseStudyRow {
  std::string example_id;
  std::vector<Verdict> verdicts;

  std::string glyphs() const;  // e.g. "✗✗✓✓✓✓"
  std::string render() const;  // glyphs with the chosen letter after wrong picks
};

CaseStudyRow case_study(const StatementPair& example, std::span<const RunResult> runs);
CaseStudyRow case_study(const ExplanationExample& example, std::span<const RunResult> runs);

void save_run_result(const RunResult& result, const std::filesystem::path& path);
RunResult load_run_result(const std::filesystem::path& path);

}  // namespace comve
