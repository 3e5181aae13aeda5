#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "comve/corpus_io.hpp"
#include "comve/encoder.hpp"

// Zero-shot statement scoring with a masked LM: each real token is masked in
// turn and scored by the negative log-probability of its original id.
namespace comve {

struct TokenScoreVector {
  std::vector<std::string> tokens;  // word-piece spellings
  std::vector<int> word_index;      // pre-tokenized word of each piece
  std::vector<double> scores;       // -log P(token | rest), one per piece
  double total = 0.0;
  std::vector<double> proportions;  // scores / total (zeros when total is 0)

  static TokenScoreVector from_scores(std::vector<std::string> tokens, std::vector<int> word_index,
                                      std::vector<double> scores);

  double mean() const;
  bool valid() const;
};

// Word-level view: sub-token scores summed into their word.
struct WordScore {
  std::string text;
  double score = 0.0;
  double proportion = 0.0;
};
std::vector<WordScore> word_scores(const TokenScoreVector& vector);

TokenScoreVector pll_score(MaskedLanguageModel& mlm, std::string_view statement);

enum class LengthNorm { kNone, kPerToken };
LengthNorm parse_length_norm(std::string_view text);  // "none" | "per_token"
std::string_view to_string(LengthNorm norm);

// Against-commonsense index given the two statement scores; ties pick 1.
int against_from_scores(double first, double second);

struct ZeroShotResult {
  int label = 1;  // against-commonsense statement
  std::array<TokenScoreVector, 2> vectors;
};

ZeroShotResult zero_shot_validate(MaskedLanguageModel& mlm, const StatementPair& pair,
                                  LengthNorm length_norm);

// 0 (darkest) .. 4 (lightest), linear in proportion relative to the largest
// proportion in the sentence.
int shade_level(double proportion, double max_proportion);

struct HeatmapRow {
  std::string caption;
  TokenScoreVector vector;
  std::optional<bool> verdict;  // check (true) / cross (false) glyph
};

std::string render_heatmap_html(std::span<const HeatmapRow> rows, std::string_view title);

void emit_heatmap(const TokenScoreVector& vector, std::optional<bool> verdict,
                  const std::filesystem::path& out_path);
void emit_heatmap(std::span<const HeatmapRow> rows, std::string_view title,
                  const std::filesystem::path& out_path);

}  // namespace comve
