#include <cmath>
#include <regex>

#include <gtest/gtest.h>

#include "comve/error.hpp"
#include "comve/lm_probe.hpp"
#include "support/test_support.hpp"

namespace comve {
namespace {

using testing::BigramMlm;
using testing::UniformMlm;
using testing::word_tokenizer;

Tokenizer toy_tokenizer() { return word_tokenizer({"a", "tuna", "is", "mammal", "dolphin"}); }

TEST(PllScore, MatchesTableOracle) {
  const Tokenizer tok = toy_tokenizer();
  ASSERT_LE(tok.size(), 10);
  BigramMlm mlm(tok, testing::random_stochastic_table(tok.size(), 1));
  const auto v = pll_score(mlm, "a tuna is a mammal");
  const std::vector<std::string> words = {"a", "tuna", "is", "a", "mammal"};
  ASSERT_EQ(v.tokens, words);
  int left = tok.cls_id();
  double total = 0.0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const int id = tok.id(words[i]);
    const double expected = -std::log(mlm.table()(left, id));
    EXPECT_NEAR(v.scores[i], expected, 1e-9);
    total += expected;
    left = id;
  }
  EXPECT_NEAR(v.total, total, 1e-9);
  EXPECT_TRUE(v.valid());
  double sum = 0.0;
  for (double p : v.proportions) sum += p;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(PllScore, UniformModelGivesLengthTimesLogV) {
  UniformMlm mlm(toy_tokenizer());
  const auto v = pll_score(mlm, "a tuna is a mammal");
  EXPECT_EQ(v.total, 5 * std::log(static_cast<double>(mlm.tokenizer().size())));
  EXPECT_DOUBLE_EQ(v.mean(), std::log(10.0));
}

TEST(PllScore, EmptyStatementIsArgumentError) {
  UniformMlm mlm(toy_tokenizer());
  EXPECT_THROW(pll_score(mlm, "   "), ArgumentError);
}

TEST(WordScores, SumsPiecesPerWord) {
  const auto v = TokenScoreVector::from_scores({"mam", "##mal", "is"}, {0, 0, 1}, {1.0, 2.0, 1.0});
  const auto w = word_scores(v);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].text, "mammal");
  EXPECT_DOUBLE_EQ(w[0].score, 3.0);
  EXPECT_DOUBLE_EQ(w[0].proportion, 0.75);
}

TEST(ZeroShot, HigherScoreIsAgainstWithTieToFirst) {
  EXPECT_EQ(against_from_scores(5.0, 3.0), 1);
  EXPECT_EQ(against_from_scores(3.0, 5.0), 2);
  EXPECT_EQ(against_from_scores(4.0, 4.0), 1);

  const Tokenizer tok = toy_tokenizer();
  BigramMlm mlm(tok, testing::random_stochastic_table(tok.size(), 2));
  const StatementPair pair{"x1", "a tuna is a mammal", "a dolphin is a mammal", 2};
  const auto r = zero_shot_validate(mlm, pair, LengthNorm::kNone);
  EXPECT_EQ(r.label, against_from_scores(r.vectors[0].total, r.vectors[1].total));
  const auto n = zero_shot_validate(mlm, {"x2", "a tuna", "a tuna is a mammal", {}}, LengthNorm::kPerToken);
  EXPECT_EQ(n.label, against_from_scores(n.vectors[0].mean(), n.vectors[1].mean()));
  EXPECT_EQ(parse_length_norm("per_token"), LengthNorm::kPerToken);
  EXPECT_THROW(parse_length_norm("bogus"), ArgumentError);
}

TEST(Heatmap, ShadeLevels) {
  EXPECT_EQ(shade_level(0.0, 0.5), 0);
  EXPECT_EQ(shade_level(0.5, 0.5), 4);
  EXPECT_EQ(shade_level(0.25, 0.5), 2);
  EXPECT_EQ(shade_level(0.3, 0.0), 0);
}

TEST(Heatmap, DeterministicHtmlWithGlyphs) {
  const auto v = TokenScoreVector::from_scores({"a", "tuna", "<b>"}, {0, 1, 2}, {0.5, 3.0, 0.5});
  const std::vector<HeatmapRow> rows = {{"first", v, true}, {"second", v, false}, {"plain", v, std::nullopt}};
  const std::string a = render_heatmap_html(rows, "Pair x1");
  EXPECT_EQ(a, render_heatmap_html(rows, "Pair x1"));
  EXPECT_NE(a.find("&#10003;"), std::string::npos);
  EXPECT_NE(a.find("&#10007;"), std::string::npos);
  EXPECT_NE(a.find("&lt;b&gt;"), std::string::npos);
  std::size_t raw = 0;  // only the three captions may open a bold tag
  for (auto at = a.find("<b>"); at != std::string::npos; at = a.find("<b>", at + 1)) ++raw;
  EXPECT_EQ(raw, rows.size());

  testing::TempDir dir;
  emit_heatmap(v, true, dir / "one.html");
  emit_heatmap(rows, "t", dir / "many.html");
  EXPECT_EQ(testing::read_file(dir / "many.html"), render_heatmap_html(rows, "t"));
  testing::write_file(dir / "plain.txt", "not a directory");
  EXPECT_THROW(emit_heatmap(v, true, dir / "plain.txt" / "x.html"), IoError);
}

}  // namespace
}  // namespace comve
