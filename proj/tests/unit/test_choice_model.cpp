#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "comve/choice_model.hpp"
#include "comve/error.hpp"
#include "support/test_support.hpp"

namespace comve {
namespace {

using testing::StubEncoder;
using testing::word_tokenizer;

TemplateId validation(Variant v) { return {Task::kValidation, v}; }
TemplateId explanation(Variant v) { return {Task::kExplanation, v}; }

StubEncoder stub(int hidden = 6) {
  return StubEncoder(word_tokenizer({"a", "b", "c", "d", "e", "if", "the", "following", "statement",
                                     "is", "in", "common", "sense", "?"}),
                     hidden, 4);
}

TEST(Softmax, SimplexAndClosedForm) {
  const auto s = softmax_scores({0.0, std::log(3.0)});
  EXPECT_NEAR(s.probabilities[0], 0.25, 1e-12);
  EXPECT_NEAR(s.probabilities[1], 0.75, 1e-12);
  EXPECT_EQ(s.argmax(), 1u);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 30.0);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> z = {n(rng), n(rng), n(rng)};
    const auto p = softmax_scores(z);
    EXPECT_NEAR(p.probabilities[0] + p.probabilities[1] + p.probabilities[2], 1.0, 1e-12);
    for (double& v : z) v += 1000.0;
    EXPECT_EQ(softmax_scores(z).argmax(), p.argmax());
  }
}

TEST(Softmax, TiesGoToLowestIndex) {
  EXPECT_EQ(softmax_scores({1.0, 1.0}).argmax(), 0u);
  EXPECT_EQ(softmax_scores({0.0, 2.0, 2.0}).argmax(), 1u);
}

TEST(EncodeChoice, LayoutAndTypeIds) {
  auto enc = stub();
  const auto& tok = enc.tokenizer();
  const auto in = encode_choice(enc, build_validation_input(validation(Variant::kP1), "a b"), 32);
  // [CLS] if the following statement is in common sense ? [SEP] a b [SEP]
  ASSERT_EQ(in.length(), 14u);
  EXPECT_EQ(in.token_ids.front(), tok.cls_id());
  EXPECT_EQ(in.token_ids[10], tok.sep_id());
  EXPECT_EQ(in.token_ids.back(), tok.sep_id());
  EXPECT_FALSE(in.overflow);
  EXPECT_EQ(in.real_length(), in.length());
  for (int t : in.type_ids) EXPECT_EQ(t, 0);  // the stub has no segment embeddings
}

TEST(EncodeChoice, TruncatesLongestNonPromptSegmentFromTheRight) {
  auto enc = stub();
  const auto& tok = enc.tokenizer();
  const auto built = build_explanation_input(explanation(Variant::kOrig), "a b c d e", "a b c");
  const auto full = encode_choice(enc, built, 64);
  ASSERT_EQ(full.length(), 11u);
  const auto cut = encode_choice(enc, built, 9);
  EXPECT_TRUE(cut.overflow);
  // "a b c d e" loses two pieces; the option keeps all three.
  const std::vector<int> expected = {tok.cls_id(), tok.id("a"), tok.id("b"), tok.id("c"), tok.sep_id(),
                                     tok.id("a"),  tok.id("b"), tok.id("c"), tok.sep_id()};
  EXPECT_EQ(cut.token_ids, expected);
  // Ties trim the first of the equally long segments.
  const auto tie = encode_choice(enc, build_explanation_input(explanation(Variant::kOrig), "a b", "c d"), 5);
  EXPECT_EQ(tie.token_ids, (std::vector<int>{tok.cls_id(), tok.id("a"), tok.sep_id(), tok.id("c"),
                                             tok.sep_id()}));
}

TEST(EncodeChoice, Errors) {
  auto enc = stub();
  const auto p1 = build_validation_input(validation(Variant::kP1), "a b");
  EXPECT_THROW(encode_choice(enc, p1, 2), ArgumentError);
  EXPECT_THROW(encode_choice(enc, p1, 8), EncodingError);  // prompt alone needs 11 slots
  EXPECT_THROW(encode_choice(enc, p1, 4096), ConfigError);
}

TEST(ChoiceHead, GradientMatchesFiniteDifferences) {
  auto enc = stub(5);
  std::mt19937_64 rng(3);
  for (int draw = 0; draw < 20; ++draw) {
    ChoiceHead head = ChoiceHead::create(5, rng(), 0.5);
    const std::vector<EncodedInput> inputs = {
        encode_choice(enc, build_validation_input(validation(Variant::kOrig), "a b"), 16),
        encode_choice(enc, build_validation_input(validation(Variant::kOrig), "c"), 16),
        encode_choice(enc, build_validation_input(validation(Variant::kOrig), "d e"), 16)};
    const int gold = static_cast<int>(rng() % 3);
    auto loss = [&]() {
      const auto s = score_choices(enc, head, inputs);
      return -std::log(s.probabilities[static_cast<std::size_t>(gold)]);
    };
    for (auto* p : head.parameters()) p->zero_grad();
    nn::Tape tape;
    std::vector<nn::Var> logits;
    for (const auto& in : inputs) logits.push_back(candidate_logit(tape, enc, head, in, {}));
    const nn::Var l = tape.cross_entropy(tape.concat_cols(logits), std::span<const int>(&gold, 1));
    tape.backward(l);
    for (auto* p : head.parameters()) {
      for (Eigen::Index i = 0; i < p->value.size(); ++i) {
        const double orig = p->value.data()[i];
        p->value.data()[i] = orig + 1e-5;
        const double plus = loss();
        p->value.data()[i] = orig - 1e-5;
        const double minus = loss();
        p->value.data()[i] = orig;
        const double numeric = (plus - minus) / 2e-5;
        const double analytic = p->grad.data()[i];
        EXPECT_LT(std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6}),
                  1e-4);
      }
    }
  }
}

TEST(ScoreChoices, CandidateCountAndHiddenSize) {
  auto enc = stub(4);
  ChoiceHead head = ChoiceHead::create(4, 1);
  const auto in = encode_choice(enc, build_validation_input(validation(Variant::kOrig), "a"), 8);
  const std::vector<EncodedInput> one = {in};
  EXPECT_THROW(score_choices(enc, head, one), ArgumentError);
  const std::vector<EncodedInput> four = {in, in, in, in};
  EXPECT_THROW(score_choices(enc, head, four), ArgumentError);
  ChoiceHead wrong = ChoiceHead::create(3, 1);
  const std::vector<EncodedInput> two = {in, in};
  EXPECT_THROW(score_choices(enc, wrong, two), ConfigError);
  const auto s = score_choices(enc, head, two);
  EXPECT_EQ(s.logits[0], s.logits[1]);
}

TEST(ChoiceHead, SaveLoadRoundTrip) {
  testing::TempDir dir;
  const ChoiceHead head = ChoiceHead::create(7, 9, 0.3);
  head.save(dir / "head.bin");
  const ChoiceHead back = ChoiceHead::load(dir / "head.bin", 7, 0.2);
  EXPECT_EQ(back.weight.value, head.weight.value);
  EXPECT_EQ(back.bias.value, head.bias.value);
  EXPECT_EQ(back.dropout, 0.2);
  EXPECT_THROW(ChoiceHead::load(dir / "head.bin", 6, 0.1), ConfigError);
}

TEST(Examples, ValidationGoldIsSensibleStatement) {
  const std::vector<StatementPair> pairs = {{"x1", "A tuna is a mammal", "A dolphin is a mammal", 2}};
  const auto ex = make_validation_examples(pairs, validation(Variant::kP2));
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(ex[0].gold, 1);
  EXPECT_EQ(render(ex[0].candidates[1]), "[CLS] If A dolphin is a mammal is in common sense? [SEP]");
}

TEST(Examples, ExplanationFallsBackWithoutContext) {
  ExplanationExample with{"x1", "f", std::string("t"), {"a", "b", "c"}, 2};
  ExplanationExample without{"x2", "f", std::nullopt, {"a", "b", "c"}, std::nullopt};
  const std::vector<ExplanationExample> all = {with, without};
  const auto ex = make_explanation_examples(all, explanation(Variant::kPPlusC));
  EXPECT_FALSE(ex[0].fell_back);
  EXPECT_TRUE(ex[1].fell_back);
  EXPECT_EQ(ex[0].gold, 1);
  EXPECT_EQ(render(ex[1].candidates[0]), "[CLS] f is against common sense because a [SEP]");
  EXPECT_EQ(ex[0].candidates[0].count(Marker::kSep), 2u);
}

TEST(TrainConfig, DefaultsAndValidation) {
  const auto a = TrainConfig::validation_defaults();
  EXPECT_EQ(a.batch_size, 24);
  EXPECT_DOUBLE_EQ(a.learning_rate, 1.5e-5);
  EXPECT_EQ(a.epochs, 5);
  EXPECT_EQ(a.max_len, 50);
  const auto b = TrainConfig::explanation_defaults(Variant::kPPlusC);
  EXPECT_EQ(b.batch_size, 36);
  EXPECT_DOUBLE_EQ(b.learning_rate, 1e-5);
  EXPECT_EQ(b.epochs, 8);
  EXPECT_EQ(b.max_len, 86);
  EXPECT_EQ(TrainConfig::explanation_defaults(Variant::kP).max_len, 50);
  auto bad = a;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

// Linearly separable features: a frozen stub plus a trainable head must fit them.
TEST(Train, HeadOnlyLearnsSeparableData) {
  const auto data = testing::make_separable_pairs(60, 5);
  StubEncoder enc(Tokenizer::build(data.texts, VocabOptions{}), 32, 2);
  std::vector<StatementPair> pairs;
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    pairs.push_back({"p" + std::to_string(i), data.pairs[i].first, data.pairs[i].second, data.sensible[i]});
  }
  const auto examples = make_validation_examples(pairs, validation(Variant::kOrig));
  ChoiceHead head = ChoiceHead::create(32, 1);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.max_len = 16;
  cfg.head_dropout = 0.0;
  const auto before = choice_accuracy(enc, head, examples, 16);
  const auto result = train(enc, head, examples, {}, cfg);
  EXPECT_EQ(result.log.size(), 30u);
  EXPECT_EQ(result.best_epoch, 30);
  EXPECT_EQ(result.steps, 30 * 8);
  EXPECT_LT(result.log.back().loss, result.log.front().loss);
  EXPECT_GE(choice_accuracy(enc, head, examples, 16), std::max(before, 0.9));

  const auto pred = predict_validation(enc, head, pairs[0], validation(Variant::kOrig), 16);
  EXPECT_EQ(pred.sensible_index, data.sensible[0]);
  EXPECT_EQ(pred.against_label, 3 - data.sensible[0]);
}

TEST(Train, DivergenceIsReported) {
  const auto data = testing::make_separable_pairs(8, 1);
  StubEncoder enc(Tokenizer::build(data.texts, VocabOptions{}), 4, 2);
  std::vector<StatementPair> pairs;
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    pairs.push_back({"p" + std::to_string(i), data.pairs[i].first, data.pairs[i].second, data.sensible[i]});
  }
  const auto examples = make_validation_examples(pairs, validation(Variant::kOrig));
  ChoiceHead head = ChoiceHead::create(4, 1);
  head.bias.value(0, 0) = std::nan("");
  TrainConfig cfg;
  cfg.max_len = 16;
  try {
    train(enc, head, examples, {}, cfg);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
  }
}

TEST(Train, UnlabelledTrainingExampleIsDataError) {
  auto enc = stub();
  ChoiceExample ex;
  ex.id = "u";
  ex.candidates = {build_validation_input(validation(Variant::kOrig), "a"),
                   build_validation_input(validation(Variant::kOrig), "b")};
  ChoiceHead head = ChoiceHead::create(6, 1);
  const std::vector<ChoiceExample> set = {ex};
  EXPECT_THROW(train(enc, head, set, {}, TrainConfig{}), DataError);
}

}  // namespace
}  // namespace comve
