#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "comve/encoder.hpp"

// Intermediate masked-LM pretraining on plain-text commonsense sentences.
namespace comve {

struct MaskingConfig {
  double mask_rate = 0.15;
  double replace_mask_frac = 0.80;
  double replace_random_frac = 0.10;
  double keep_frac = 0.10;
  std::uint64_t seed = 13;

  void validate() const;  // throws ConfigError
};

// Where corrupted tokens may come from.
struct MaskVocabulary {
  int mask_id = 0;
  std::vector<int> random_pool;  // candidate ids for random replacement

  static MaskVocabulary from(const Tokenizer& tokenizer);  // non-special ids
};

struct MaskedSequence {
  std::vector<int> token_ids;  // corrupted sequence
  std::vector<int> targets;    // original id at selected positions, kIgnoreTarget elsewhere
  std::vector<std::size_t> selected;  // selected positions, ascending
  std::size_t masked = 0;
  std::size_t randomized = 0;
  std::size_t kept = 0;
};

// Selects round(mask_rate * eligible) non-special positions uniformly without
// replacement and splits them by quota into mask / random / keep. The result
// depends only on (token_ids, config, special_positions, vocabulary).
MaskedSequence mask_tokens(std::span<const int> token_ids, const MaskingConfig& config,
                           std::span<const std::size_t> special_positions,
                           const MaskVocabulary& vocabulary);

std::vector<std::size_t> special_positions(std::span<const int> token_ids,
                                           const Tokenizer& tokenizer);

struct PretrainConfig {
  int batch_size = 32;
  double learning_rate = 5e-5;
  int epochs = 3;
  int max_len = 64;
  std::uint64_t seed = 17;
  double warmup_fraction = 0.06;
  double weight_decay = 0.01;
  std::optional<double> grad_clip = 1.0;
  std::size_t eval_sentences = 256;  // sentences in the before/after loss probe

  void validate() const;  // throws ConfigError
};

struct PretrainLog {
  std::vector<double> epoch_loss;  // mean masked-token loss per epoch
  double initial_eval_loss = 0.0;  // fixed-mask loss before training
  double final_eval_loss = 0.0;    // same masks after training
  std::int64_t steps = 0;
};

// [CLS] pieces [SEP], pieces truncated to max_len - 2.
EncodedInput encode_sentence(const Tokenizer& tokenizer, std::string_view sentence,
                             std::size_t max_len);

// Mean cross-entropy over masked positions of `sentences` in evaluation mode,
// with masks drawn from `config`. Returns 0 when nothing is masked.
double masked_lm_loss(TransformerEncoder& model, std::span<const std::string> sentences,
                      const MaskingConfig& config, std::size_t max_len);

PretrainLog pretrain(TransformerEncoder& model, std::span<const std::string> corpus,
                     const MaskingConfig& mask_config, const PretrainConfig& run_config);

}  // namespace comve
