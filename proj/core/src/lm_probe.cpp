#include "comve/lm_probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "comve/error.hpp"

namespace comve {
namespace {

constexpr const char* kModule = "lm_probe";

// Dark to light; index = shade level.
constexpr std::array<const char*, 5> kShades = {"#08306b", "#2171b5", "#6baed6", "#c6dbef",
                                                 "#f7fbff"};

std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

TokenScoreVector TokenScoreVector::from_scores(std::vector<std::string> tokens,
                                               std::vector<int> word_index,
                                               std::vector<double> scores) {
  if (tokens.size() != scores.size() || word_index.size() != scores.size()) {
    throw ArgumentError(kModule, "token, word index and score lengths differ");
  }
  TokenScoreVector v;
  v.tokens = std::move(tokens);
  v.word_index = std::move(word_index);
  v.scores = std::move(scores);
  // Compensated summation keeps the total within one rounding of the exact sum.
  double sum = 0.0, carry = 0.0;
  for (double x : v.scores) {
    const double t = sum + x;
    carry += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  v.total = sum + carry;
  v.proportions.assign(v.scores.size(), 0.0);
  if (v.total > 0.0) {
    for (std::size_t i = 0; i < v.scores.size(); ++i) v.proportions[i] = v.scores[i] / v.total;
  }
  return v;
}

double TokenScoreVector::mean() const {
  return scores.empty() ? 0.0 : total / static_cast<double>(scores.size());
}

bool TokenScoreVector::valid() const {
  if (tokens.size() != scores.size() || proportions.size() != scores.size() ||
      word_index.size() != scores.size()) {
    return false;
  }
  return std::all_of(scores.begin(), scores.end(), [](double s) { return s >= 0.0 && std::isfinite(s); });
}

std::vector<WordScore> word_scores(const TokenScoreVector& v) {
  std::vector<WordScore> words;
  int current = -1;
  for (std::size_t i = 0; i < v.scores.size(); ++i) {
    if (words.empty() || v.word_index[i] != current) {
      words.push_back({});
      current = v.word_index[i];
    }
    words.back().text += Tokenizer::surface(v.tokens[i]);
    words.back().score += v.scores[i];
    words.back().proportion += v.proportions[i];
  }
  return words;
}

TokenScoreVector pll_score(MaskedLanguageModel& mlm, std::string_view statement) {
  const Tokenizer& tok = mlm.tokenizer();
  const auto pieces = tok.tokenize(statement);
  if (pieces.empty()) throw ArgumentError(kModule, "statement has no tokens");

  std::vector<int> ids;
  ids.reserve(pieces.size() + 2);
  ids.push_back(tok.cls_id());
  for (const auto& p : pieces) ids.push_back(p.id);
  ids.push_back(tok.sep_id());

  std::vector<std::string> tokens;
  std::vector<int> words;
  std::vector<double> scores;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const std::size_t pos = i + 1;
    std::vector<int> masked = ids;
    masked[pos] = tok.mask_id();
    const nn::Matrix lp = mlm.log_probs(masked);
    if (lp.rows() != static_cast<Eigen::Index>(ids.size()) || lp.cols() != tok.size()) {
      throw ConfigError(kModule, "masked LM returned a log-probability table of the wrong shape");
    }
    tokens.push_back(pieces[i].text);
    words.push_back(pieces[i].word_index);
    scores.push_back(-lp(static_cast<Eigen::Index>(pos), ids[pos]));
  }
  return TokenScoreVector::from_scores(std::move(tokens), std::move(words), std::move(scores));
}

LengthNorm parse_length_norm(std::string_view text) {
  if (text == "none" || text.empty()) return LengthNorm::kNone;
  if (text == "per_token" || text == "per-token") return LengthNorm::kPerToken;
  throw ArgumentError(kModule, "unknown length normalisation '" + std::string(text) + "'");
}

std::string_view to_string(LengthNorm norm) {
  return norm == LengthNorm::kNone ? "none" : "per_token";
}

int against_from_scores(double first, double second) { return second > first ? 2 : 1; }

ZeroShotResult zero_shot_validate(MaskedLanguageModel& mlm, const StatementPair& pair,
                                  LengthNorm length_norm) {
  ZeroShotResult r;
  r.vectors[0] = pll_score(mlm, pair.s1);
  r.vectors[1] = pll_score(mlm, pair.s2);
  const auto value = [length_norm](const TokenScoreVector& v) {
    return length_norm == LengthNorm::kPerToken ? v.mean() : v.total;
  };
  r.label = against_from_scores(value(r.vectors[0]), value(r.vectors[1]));
  return r;
}

int shade_level(double proportion, double max_proportion) {
  if (!(max_proportion > 0.0) || !(proportion > 0.0)) return 0;
  const double x = std::clamp(proportion / max_proportion, 0.0, 1.0);
  return std::min(4, static_cast<int>(std::floor(x * 5.0)));
}

std::string render_heatmap_html(std::span<const HeatmapRow> rows, std::string_view title) {
  std::string html;
  html += "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>";
  html += html_escape(title);
  html += "</title>\n<style>\n"
          "body{font-family:sans-serif;background:#ffffff;}\n"
          ".row{margin:0.6em 0;}\n"
          ".tok{padding:0.15em 0.3em;margin:0 0.1em;border-radius:3px;}\n";
  for (std::size_t i = 0; i < kShades.size(); ++i) {
    html += ".s" + std::to_string(i) + "{background:" + kShades[i] +
            ";color:" + (i < 2 ? "#ffffff" : "#000000") + ";}\n";
  }
  html += "</style>\n</head>\n<body>\n<h3>" + html_escape(title) + "</h3>\n";
  for (const auto& row : rows) {
    const auto words = word_scores(row.vector);
    double max_p = 0.0;
    for (const auto& w : words) max_p = std::max(max_p, w.proportion);
    html += "<div class=\"row\">";
    if (row.verdict) html += *row.verdict ? "<span class=\"verdict\">&#10003;</span> " : "<span class=\"verdict\">&#10007;</span> ";
    if (!row.caption.empty()) html += "<b>" + html_escape(row.caption) + "</b> ";
    for (const auto& w : words) {
      html += "<span class=\"tok s" + std::to_string(shade_level(w.proportion, max_p)) +
              "\" title=\"score=" + fixed(w.score, 4) + " share=" + fixed(w.proportion, 4) +
              "\">" + html_escape(w.text) + "</span>";
    }
    html += " <small>total=" + fixed(row.vector.total, 4) + "</small></div>\n";
  }
  html += "</body>\n</html>\n";
  return html;
}

void emit_heatmap(std::span<const HeatmapRow> rows, std::string_view title,
                  const std::filesystem::path& out_path) {
  for (const auto& r : rows) {
    if (!r.vector.valid()) throw ArgumentError(kModule, "invalid token score vector");
  }
  if (out_path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(out_path.parent_path(), ec);
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(kModule, "cannot write " + out_path.string());
  out << render_heatmap_html(rows, title);
  if (!out) throw IoError(kModule, "write failed for " + out_path.string());
}

void emit_heatmap(const TokenScoreVector& vector, std::optional<bool> verdict,
                  const std::filesystem::path& out_path) {
  const HeatmapRow row{"", vector, verdict};
  emit_heatmap(std::span(&row, 1), "token-level scores", out_path);
}

}  // namespace comve
