#include <algorithm>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "comve/error.hpp"
#include "comve/omcs_pretrainer.hpp"
#include "support/test_support.hpp"

namespace comve {
namespace {

MaskVocabulary toy_vocabulary() {
  MaskVocabulary v;
  v.mask_id = 4;
  for (int i = 5; i < 30; ++i) v.random_pool.push_back(i);
  return v;
}

TEST(MaskTokens, ExactCountAndQuotaSplit) {
  std::vector<int> ids(10002);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = 5 + static_cast<int>(i % 25);
  ids.front() = 2;
  ids.back() = 3;
  const std::vector<std::size_t> special = {0, ids.size() - 1};
  MaskingConfig cfg;
  const auto m = mask_tokens(ids, cfg, special, toy_vocabulary());
  EXPECT_EQ(m.selected.size(), 1500u);
  EXPECT_EQ(m.masked, 1200u);
  EXPECT_EQ(m.randomized, 150u);
  EXPECT_EQ(m.kept, 150u);
  EXPECT_EQ(m.token_ids.front(), 2);
  EXPECT_EQ(m.token_ids.back(), 3);
  EXPECT_EQ(m.targets.front(), nn::kIgnoreTarget);
  EXPECT_TRUE(std::is_sorted(m.selected.begin(), m.selected.end()));

  std::size_t with_target = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (m.targets[i] != nn::kIgnoreTarget) {
      ++with_target;
      EXPECT_EQ(m.targets[i], ids[i]);
    } else {
      EXPECT_EQ(m.token_ids[i], ids[i]);
    }
  }
  EXPECT_EQ(with_target, 1500u);
}

TEST(MaskTokens, DeterministicPerSeedAndSeedSensitive) {
  std::vector<int> ids(500, 7);
  MaskingConfig cfg;
  const auto a = mask_tokens(ids, cfg, {}, toy_vocabulary());
  const auto b = mask_tokens(ids, cfg, {}, toy_vocabulary());
  EXPECT_EQ(a.selected, b.selected);
  EXPECT_EQ(a.token_ids, b.token_ids);
  cfg.seed = 99;
  EXPECT_NE(mask_tokens(ids, cfg, {}, toy_vocabulary()).selected, a.selected);
}

TEST(MaskTokens, SelectionIsRoughlyUniform) {
  std::vector<int> ids(20, 9);
  std::vector<int> hits(20, 0);
  MaskingConfig cfg;
  cfg.mask_rate = 0.25;
  for (std::uint64_t s = 0; s < 4000; ++s) {
    cfg.seed = s;
    for (std::size_t p : mask_tokens(ids, cfg, {}, toy_vocabulary()).selected) ++hits[p];
  }
  for (int h : hits) EXPECT_NEAR(h / 4000.0, 0.25, 0.03);
}

TEST(MaskTokens, EdgeCases) {
  const std::vector<int> ids = {2, 10, 3};
  const std::vector<std::size_t> special = {0, 2};
  EXPECT_TRUE(mask_tokens(ids, MaskingConfig{}, special, toy_vocabulary()).selected.empty());
  MaskingConfig zero;
  zero.mask_rate = 0.0;
  const std::vector<int> long_ids(100, 11);
  EXPECT_EQ(mask_tokens(long_ids, zero, {}, toy_vocabulary()).token_ids, long_ids);
  MaskingConfig bad;
  bad.replace_mask_frac = 0.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = MaskingConfig{};
  bad.mask_rate = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  const std::vector<std::size_t> out_of_range = {5};
  EXPECT_THROW(mask_tokens(ids, MaskingConfig{}, out_of_range, toy_vocabulary()), ArgumentError);
}

TEST(MaskVocabulary, ExcludesSpecials) {
  const Tokenizer tok = testing::word_tokenizer({"a", "b", "c"});
  const auto v = MaskVocabulary::from(tok);
  EXPECT_EQ(v.mask_id, tok.mask_id());
  EXPECT_EQ(v.random_pool, (std::vector<int>{5, 6, 7}));
  const std::vector<int> ids = {tok.cls_id(), 5, tok.sep_id(), tok.pad_id()};
  EXPECT_EQ(special_positions(ids, tok), (std::vector<std::size_t>{0, 2, 3}));
}

TEST(EncodeSentence, WrapsAndTruncates) {
  const Tokenizer tok = testing::word_tokenizer({"a", "b", "c"});
  const auto e = encode_sentence(tok, "a b c a b", 5);
  EXPECT_EQ(e.token_ids, (std::vector<int>{tok.cls_id(), 5, 6, 7, tok.sep_id()}));
  EXPECT_TRUE(e.overflow);
}

TEST(Pretrain, ReducesMaskedLossOnRepeatedCorpus) {
  const std::vector<std::string> base = {"dogs can bark at night", "birds can fly in the sky",
                                         "fish can swim in the sea", "people eat bread every day"};
  std::vector<std::string> corpus;
  for (int i = 0; i < 12; ++i) corpus.insert(corpus.end(), base.begin(), base.end());
  TransformerConfig arch;
  arch.hidden_size = 16;
  arch.num_layers = 1;
  arch.num_heads = 2;
  arch.ffn_size = 32;
  arch.max_positions = 16;
  arch.dropout = 0.0;
  TransformerEncoder model(arch, Tokenizer::build(corpus, VocabOptions{}), 3);
  TransformerEncoder replay(arch, Tokenizer::build(corpus, VocabOptions{}), 3);

  PretrainConfig run;
  run.batch_size = 8;
  run.learning_rate = 5e-3;
  run.epochs = 6;
  run.max_len = 16;
  run.eval_sentences = 16;
  MaskingConfig mask;
  mask.mask_rate = 0.3;
  const auto log = pretrain(model, corpus, mask, run);
  EXPECT_EQ(log.epoch_loss.size(), 6u);
  EXPECT_GT(log.steps, 0);
  EXPECT_LT(log.final_eval_loss, 0.8 * log.initial_eval_loss);

  const auto again = pretrain(replay, corpus, mask, run);
  EXPECT_EQ(again.epoch_loss, log.epoch_loss);
  EXPECT_EQ(again.final_eval_loss, log.final_eval_loss);
}

}  // namespace
}  // namespace comve
