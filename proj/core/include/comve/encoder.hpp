#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "comve/nn/tape.hpp"
#include "comve/tokenizer.hpp"

namespace comve {

namespace fs = std::filesystem;

// Token-level model input. All three sequences share one length; the mask is
// 1 exactly on real (non-padding) positions.
struct EncodedInput {
  std::vector<int> token_ids;
  std::vector<int> type_ids;
  std::vector<int> attention_mask;
  bool overflow = false;

  std::size_t length() const { return token_ids.size(); }
  std::size_t real_length() const;
  friend bool operator==(const EncodedInput&, const EncodedInput&) = default;
};

struct ForwardOptions {
  bool training = false;          // enables dropout
  std::mt19937_64* rng = nullptr;  // required when training
};

// A contextual encoder: maps an encoded sequence to one hidden vector per
// position. Forward passes mutate no model state, so a single instance can be
// shared by readers that never call backward; trainers own their instance.
class EncoderAdapter {
 public:
  virtual ~EncoderAdapter() = default;

  virtual const std::string& name() const = 0;
  virtual const Tokenizer& tokenizer() const = 0;
  virtual int hidden_size() const = 0;
  virtual int max_positions() const = 0;
  virtual bool supports_type_ids() const = 0;

  // Returns an (input length x hidden_size) node.
  virtual nn::Var encode(nn::Tape& tape, const EncodedInput& input,
                         const ForwardOptions& options) = 0;
  // Trainable parameters; empty for frozen encoders.
  virtual std::vector<nn::Parameter*> parameters() = 0;
  virtual std::unique_ptr<EncoderAdapter> clone() const = 0;
};

// An encoder with a token-prediction head over its own vocabulary.
class MaskedLanguageModel {
 public:
  virtual ~MaskedLanguageModel() = default;

  virtual const Tokenizer& tokenizer() const = 0;
  // Log-probabilities over the vocabulary at every position: (n x vocab).
  virtual nn::Matrix log_probs(std::span<const int> token_ids) = 0;
};

struct TransformerConfig {
  std::string name = "tiny-transformer";
  int hidden_size = 64;
  int num_layers = 2;
  int num_heads = 4;
  int ffn_size = 128;
  int max_positions = 128;
  int type_vocab_size = 2;  // 0 disables segment embeddings
  double dropout = 0.1;
  double layer_norm_eps = 1e-5;
  double init_std = 0.02;

  void validate() const;  // throws ConfigError
};

// Post-norm transformer encoder with learned position embeddings and a tied
// masked-LM head, in the layout of the BERT/RoBERTa encoder family.
class TransformerEncoder final : public EncoderAdapter, public MaskedLanguageModel {
 public:
  TransformerEncoder(TransformerConfig config, Tokenizer tokenizer, std::uint64_t seed);

  const std::string& name() const override { return config_.name; }
  const Tokenizer& tokenizer() const override { return tokenizer_; }
  int hidden_size() const override { return config_.hidden_size; }
  int max_positions() const override { return config_.max_positions; }
  bool supports_type_ids() const override { return config_.type_vocab_size > 1; }
  const TransformerConfig& config() const { return config_; }

  nn::Var encode(nn::Tape& tape, const EncodedInput& input,
                 const ForwardOptions& options) override;
  // (n x vocab) logits of the tied MLM head.
  nn::Var mlm_logits(nn::Tape& tape, const EncodedInput& input, const ForwardOptions& options);
  nn::Matrix log_probs(std::span<const int> token_ids) override;

  std::vector<nn::Parameter*> parameters() override;
  std::vector<const nn::Parameter*> parameters() const;
  std::unique_ptr<EncoderAdapter> clone() const override;

  // Checkpoint directory: encoder.json, vocab.txt, params.bin.
  void save(const fs::path& dir) const;
  static std::unique_ptr<TransformerEncoder> load(const fs::path& dir);

 private:
  struct Layer {
    nn::Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    nn::Parameter ln1_gamma, ln1_beta;
    nn::Parameter w1, b1, w2, b2;
    nn::Parameter ln2_gamma, ln2_beta;
  };

  nn::Var layer_forward(nn::Tape& tape, Layer& layer, nn::Var x, std::span<const int> mask,
                        const ForwardOptions& options);
  nn::Var maybe_dropout(nn::Tape& tape, nn::Var x, const ForwardOptions& options);

  TransformerConfig config_;
  Tokenizer tokenizer_;
  nn::Parameter word_emb_, pos_emb_, type_emb_, emb_ln_gamma_, emb_ln_beta_;
  std::vector<Layer> layers_;
  nn::Parameter mlm_dense_w_, mlm_dense_b_, mlm_ln_gamma_, mlm_ln_beta_, mlm_bias_;
};

// Resolves an encoder reference: an existing checkpoint directory, or a
// registry name looked up under $COMVE_CACHE_DIR.
fs::path resolve_encoder_path(const std::string& name_or_path);

}  // namespace comve
