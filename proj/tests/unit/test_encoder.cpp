#include <cmath>
#include <cstdlib>
#include <random>

#include <gtest/gtest.h>

#include "comve/choice_model.hpp"
#include "comve/encoder.hpp"
#include "comve/error.hpp"
#include "support/test_support.hpp"

namespace comve {
namespace {

TransformerConfig tiny_config() {
  TransformerConfig c;
  c.hidden_size = 8;
  c.num_layers = 2;
  c.num_heads = 2;
  c.ffn_size = 12;
  c.max_positions = 16;
  c.dropout = 0.0;
  c.init_std = 0.3;
  return c;
}

Tokenizer small_tokenizer() {
  return testing::word_tokenizer({"a", "tuna", "is", "mammal", "dolphin", "fish"});
}

EncodedInput input_for(const Tokenizer& tok, const std::vector<std::string>& words) {
  EncodedInput in;
  in.token_ids.push_back(tok.cls_id());
  for (const auto& w : words) in.token_ids.push_back(tok.id(w));
  in.token_ids.push_back(tok.sep_id());
  in.type_ids.assign(in.token_ids.size(), 0);
  in.attention_mask.assign(in.token_ids.size(), 1);
  return in;
}

// MLM cross-entropy on a fixed target set, as a function of all parameters.
double mlm_loss(TransformerEncoder& enc, const EncodedInput& in, const std::vector<int>& targets,
                bool backward) {
  nn::Tape tape;
  const nn::Var logits = enc.mlm_logits(tape, in, ForwardOptions{});
  const nn::Var loss = tape.cross_entropy(logits, targets);
  if (backward) tape.backward(loss);
  return tape.scalar(loss);
}

TEST(TransformerEncoder, GradientMatchesFiniteDifferences) {
  TransformerEncoder enc(tiny_config(), small_tokenizer(), 5);
  const auto& tok = enc.tokenizer();
  const auto in = input_for(tok, {"a", "tuna", "is", "a", "mammal"});
  std::vector<int> targets(in.length(), nn::kIgnoreTarget);
  targets[2] = tok.id("tuna");
  targets[5] = tok.id("mammal");
  for (auto* p : enc.parameters()) p->zero_grad();
  mlm_loss(enc, in, targets, true);

  std::mt19937_64 rng(11);
  const double h = 1e-5;
  int checked = 0;
  for (auto* p : enc.parameters()) {
    for (int k = 0; k < 3; ++k) {
      const Eigen::Index i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(p->value.size()));
      const double orig = p->value.data()[i];
      p->value.data()[i] = orig + h;
      const double plus = mlm_loss(enc, in, targets, false);
      p->value.data()[i] = orig - h;
      const double minus = mlm_loss(enc, in, targets, false);
      p->value.data()[i] = orig;
      const double numeric = (plus - minus) / (2 * h);
      const double analytic = p->grad.data()[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      EXPECT_LT(std::abs(numeric - analytic) / denom, 1e-4) << p->name << "[" << i << "]";
      ++checked;
    }
  }
  EXPECT_GT(checked, 30);
}

TEST(TransformerEncoder, LogProbsAreNormalised) {
  TransformerEncoder enc(tiny_config(), small_tokenizer(), 1);
  const auto in = input_for(enc.tokenizer(), {"a", "fish"});
  const nn::Matrix lp = enc.log_probs(in.token_ids);
  ASSERT_EQ(lp.rows(), 4);
  ASSERT_EQ(lp.cols(), enc.tokenizer().size());
  for (Eigen::Index r = 0; r < lp.rows(); ++r) EXPECT_NEAR(lp.row(r).array().exp().sum(), 1.0, 1e-12);
}

TEST(TransformerEncoder, SameSeedSameWeightsAndCloneIsIndependent) {
  TransformerEncoder a(tiny_config(), small_tokenizer(), 3);
  TransformerEncoder b(tiny_config(), small_tokenizer(), 3);
  const auto in = input_for(a.tokenizer(), {"tuna", "is", "fish"});
  EXPECT_EQ(a.log_probs(in.token_ids), b.log_probs(in.token_ids));
  auto c = a.clone();
  a.parameters()[0]->value.array() += 1.0;
  nn::Tape t1, t2;
  EXPECT_NE(t1.value(a.encode(t1, in, {})), t2.value(c->encode(t2, in, {})));
}

TEST(TransformerEncoder, SaveLoadRoundTrip) {
  testing::TempDir dir;
  TransformerEncoder enc(tiny_config(), small_tokenizer(), 9);
  enc.save(dir / "ckpt");
  const auto back = TransformerEncoder::load(dir / "ckpt");
  const auto in = input_for(enc.tokenizer(), {"a", "dolphin", "is", "a", "mammal"});
  EXPECT_EQ(back->log_probs(in.token_ids), enc.log_probs(in.token_ids));
  EXPECT_EQ(back->config().hidden_size, 8);
  EXPECT_THROW(TransformerEncoder::load(dir / "missing"), IoError);
}

TEST(TransformerEncoder, KeyMaskHidesPositions) {
  TransformerEncoder enc(tiny_config(), small_tokenizer(), 2);
  auto in = input_for(enc.tokenizer(), {"a", "tuna"});
  auto padded = in;
  padded.token_ids.push_back(enc.tokenizer().pad_id());
  padded.type_ids.push_back(0);
  padded.attention_mask.push_back(0);
  nn::Tape t1, t2;
  const nn::Matrix h1 = t1.value(enc.encode(t1, in, {}));
  const nn::Matrix h2 = t2.value(enc.encode(t2, padded, {}));
  EXPECT_TRUE(h1.isApprox(h2.topRows(h1.rows()), 1e-12));
}

TEST(TransformerEncoder, ConfigValidation) {
  auto c = tiny_config();
  c.num_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(tiny_config().validate());
}

TEST(ResolveEncoderPath, DirectAndCached) {
  testing::TempDir dir;
  std::filesystem::create_directories(dir / "my-encoder");
  EXPECT_EQ(resolve_encoder_path((dir / "my-encoder").string()), dir / "my-encoder");
  ::setenv("COMVE_CACHE_DIR", dir.path().c_str(), 1);
  EXPECT_EQ(resolve_encoder_path("my-encoder"), dir.path() / "my-encoder");
  EXPECT_THROW(resolve_encoder_path("absent"), ConfigError);
  ::unsetenv("COMVE_CACHE_DIR");
  EXPECT_THROW(resolve_encoder_path("my-encoder"), ConfigError);
}

}  // namespace
}  // namespace comve
