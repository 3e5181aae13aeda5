#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "comve/corpus_io.hpp"
#include "comve/encoder.hpp"
#include "comve/prompt_builder.hpp"

// Multiple-choice scoring: every candidate input is encoded independently,
// the first-position hidden state goes through a single-logit head, and a
// softmax across candidates gives the per-candidate probability.
namespace comve {

struct ChoiceScores {
  std::vector<double> logits;
  std::vector<double> probabilities;

  // Index of the highest probability; ties go to the lowest index.
  std::size_t argmax() const;
};

ChoiceScores softmax_scores(std::vector<double> logits);

// Linear hidden_size -> 1 scorer with dropout on its input while training.
struct ChoiceHead {
  nn::Parameter weight;  // hidden_size x 1
  nn::Parameter bias;    // 1 x 1
  double dropout = 0.1;

  static ChoiceHead create(int hidden_size, std::uint64_t seed, double init_std = 0.02);
  int hidden_size() const { return static_cast<int>(weight.value.rows()); }
  std::vector<nn::Parameter*> parameters() { return {&weight, &bias}; }

  void save(const std::filesystem::path& path) const;
  static ChoiceHead load(const std::filesystem::path& path, int hidden_size, double dropout);
};

// Maps abstract markers to the adapter's special tokens and word-pieces every
// segment. Over-long inputs lose pieces from the right end of the longest
// non-prompt segment; prompt text and the final SEP always survive.
EncodedInput encode_choice(const EncoderAdapter& adapter, const SegmentedInput& input,
                           std::size_t max_len);

// f(C) for one candidate, as a 1x1 node on `tape`.
nn::Var candidate_logit(nn::Tape& tape, EncoderAdapter& adapter, ChoiceHead& head,
                        const EncodedInput& input, const ForwardOptions& options);

ChoiceScores score_choices(EncoderAdapter& adapter, ChoiceHead& head,
                           std::span<const EncodedInput> inputs);

struct ChoiceExample {
  std::string id;
  std::vector<SegmentedInput> candidates;
  std::optional<int> gold;  // 0-based candidate index
  bool fell_back = false;   // built with P because the context was unavailable
};

// Gold is the commonsensible statement.
std::vector<ChoiceExample> make_validation_examples(std::span<const StatementPair> pairs,
                                                    TemplateId variant,
                                                    const PromptOptions& options = {});
// P+C examples without a resolved true statement fall back to P.
std::vector<ChoiceExample> make_explanation_examples(std::span<const ExplanationExample> examples,
                                                     TemplateId variant);

struct TrainConfig {
  int batch_size = 24;
  double learning_rate = 1.5e-5;
  int epochs = 5;
  int max_len = 50;
  std::uint64_t seed = 42;
  std::optional<double> grad_clip = 1.0;
  double warmup_fraction = 0.06;
  double weight_decay = 0.01;
  double adam_eps = 1e-8;
  double head_dropout = 0.1;

  static TrainConfig validation_defaults();
  static TrainConfig explanation_defaults(Variant variant);
  void validate() const;  // throws ConfigError
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> dev_accuracy;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = 0;  // 0 when no epoch ran
  std::int64_t steps = 0;
};

// End-to-end cross-entropy training of adapter and head. With a non-empty
// dev set, the parameters left in place are those of the epoch with the best
// dev accuracy (earliest on ties); otherwise those of the last epoch.
TrainResult train(EncoderAdapter& adapter, ChoiceHead& head, std::span<const ChoiceExample> train_set,
                  std::span<const ChoiceExample> dev_set, const TrainConfig& config);

// Fraction of labelled examples whose gold candidate wins.
double choice_accuracy(EncoderAdapter& adapter, ChoiceHead& head,
                       std::span<const ChoiceExample> examples, std::size_t max_len);

struct ValidationPrediction {
  int sensible_index = 1;  // argmax over the two statements
  int against_label = 2;   // the task answer, the other statement
  ChoiceScores scores;
};

ValidationPrediction predict_validation(EncoderAdapter& adapter, ChoiceHead& head,
                                        const StatementPair& pair, TemplateId variant,
                                        std::size_t max_len, const PromptOptions& options = {});
ValidationPrediction validation_from_scores(ChoiceScores scores);

struct ExplanationPrediction {
  int label = 1;  // 1..3
  ChoiceScores scores;
  bool fell_back = false;
};

ExplanationPrediction predict_explanation(EncoderAdapter& adapter, ChoiceHead& head,
                                          const ExplanationExample& example, TemplateId variant,
                                          std::size_t max_len);

}  // namespace comve
