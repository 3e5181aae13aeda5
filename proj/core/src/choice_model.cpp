#include "comve/choice_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "comve/error.hpp"
#include "comve/nn/optim.hpp"
#include "comve/nn/param_io.hpp"

namespace comve {
namespace {

constexpr const char* kModule = "choice_model";
using nn::Matrix;

std::vector<EncodedInput> encode_all(const EncoderAdapter& adapter, const ChoiceExample& ex,
                                     std::size_t max_len) {
  std::vector<EncodedInput> out;
  out.reserve(ex.candidates.size());
  for (const auto& c : ex.candidates) out.push_back(encode_choice(adapter, c, max_len));
  return out;
}

nn::Var candidate_logits(nn::Tape& tape, EncoderAdapter& adapter, ChoiceHead& head,
                         std::span<const EncodedInput> inputs, const ForwardOptions& options) {
  std::vector<nn::Var> logits;
  logits.reserve(inputs.size());
  for (const auto& in : inputs) logits.push_back(candidate_logit(tape, adapter, head, in, options));
  return tape.concat_cols(logits);
}

}  // namespace

std::size_t ChoiceScores::argmax() const {
  if (probabilities.empty()) throw ArgumentError(kModule, "argmax of empty scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < probabilities.size(); ++i) {
    if (probabilities[i] > probabilities[best]) best = i;
  }
  return best;
}

ChoiceScores softmax_scores(std::vector<double> logits) {
  ChoiceScores s;
  s.probabilities.resize(logits.size());
  if (!logits.empty()) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      s.probabilities[i] = std::exp(logits[i] - mx);
      sum += s.probabilities[i];
    }
    for (double& p : s.probabilities) p /= sum;
  }
  s.logits = std::move(logits);
  return s;
}

ChoiceHead ChoiceHead::create(int hidden_size, std::uint64_t seed, double init_std) {
  if (hidden_size <= 0) throw ConfigError(kModule, "hidden_size must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, init_std);
  Matrix w(hidden_size, 1);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  ChoiceHead head;
  head.weight = nn::Parameter("head.weight", std::move(w), true);
  head.bias = nn::Parameter("head.bias", Matrix::Zero(1, 1), false);
  return head;
}

void ChoiceHead::save(const std::filesystem::path& path) const {
  const std::vector<const nn::Parameter*> params = {&weight, &bias};
  nn::save_parameters(path, params);
}

ChoiceHead ChoiceHead::load(const std::filesystem::path& path, int hidden_size, double dropout) {
  ChoiceHead head = create(hidden_size, 0);
  head.dropout = dropout;
  nn::load_parameters(path, head.parameters());
  return head;
}

EncodedInput encode_choice(const EncoderAdapter& adapter, const SegmentedInput& input,
                           std::size_t max_len) {
  const Tokenizer& tok = adapter.tokenizer();
  const std::size_t markers = input.marker_layout.size();
  if (input.count(Marker::kCls) != 1 || input.count(Marker::kSep) < 1) {
    throw ArgumentError(kModule, "input must have one CLS and at least one SEP marker");
  }
  if (max_len < markers + 1) {
    throw ArgumentError(kModule, "max_len " + std::to_string(max_len) + " cannot hold " +
                                     std::to_string(markers) + " markers and a token");
  }
  if (max_len > static_cast<std::size_t>(adapter.max_positions())) {
    throw ConfigError(kModule, "max_len " + std::to_string(max_len) +
                                   " exceeds the encoder's max_positions " +
                                   std::to_string(adapter.max_positions()));
  }

  std::vector<std::vector<int>> pieces(input.segments.size());
  std::size_t total = markers;
  for (std::size_t i = 0; i < input.segments.size(); ++i) {
    for (const auto& p : tok.tokenize(input.segments[i].text)) pieces[i].push_back(p.id);
    total += pieces[i].size();
  }

  EncodedInput out;
  while (total > max_len) {
    out.overflow = true;
    std::size_t longest = pieces.size();
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      if (input.segments[i].role == SegmentRole::kPrompt) continue;
      if (longest == pieces.size() || pieces[i].size() > pieces[longest].size()) longest = i;
    }
    if (longest == pieces.size() || pieces[longest].empty()) {
      throw EncodingError(kModule, "prompt text alone exceeds max_len " + std::to_string(max_len));
    }
    pieces[longest].pop_back();
    --total;
  }
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (input.segments[i].role != SegmentRole::kPrompt && pieces[i].empty()) {
      throw EncodingError(kModule, "a non-prompt segment has no tokens left at max_len " +
                                       std::to_string(max_len));
    }
  }

  const bool pair_types = adapter.supports_type_ids();
  int type = 0;
  auto slot = input.marker_layout.begin();
  auto emit_markers = [&](std::size_t position) {
    while (slot != input.marker_layout.end() && slot->position == position) {
      const bool sep = slot->marker == Marker::kSep;
      out.token_ids.push_back(sep ? tok.sep_id() : tok.cls_id());
      out.type_ids.push_back(type);
      if (sep && pair_types) type = 1;
      ++slot;
    }
  };
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    emit_markers(i);
    for (int id : pieces[i]) {
      out.token_ids.push_back(id);
      out.type_ids.push_back(type);
    }
  }
  emit_markers(pieces.size());
  out.attention_mask.assign(out.token_ids.size(), 1);
  return out;
}

nn::Var candidate_logit(nn::Tape& tape, EncoderAdapter& adapter, ChoiceHead& head,
                        const EncodedInput& input, const ForwardOptions& options) {
  if (head.hidden_size() != adapter.hidden_size()) {
    throw ConfigError(kModule, "head expects hidden size " + std::to_string(head.hidden_size()) +
                                   " but encoder produces " +
                                   std::to_string(adapter.hidden_size()));
  }
  const nn::Var hidden = adapter.encode(tape, input, options);
  if (tape.value(hidden).cols() != head.hidden_size()) {
    throw ConfigError(kModule, "encoder output width does not match its hidden_size");
  }
  nn::Var first = tape.slice_rows(hidden, 0, 1);
  if (options.training && head.dropout > 0.0) {
    if (!options.rng) throw ArgumentError(kModule, "training forward pass needs an rng");
    first = tape.dropout(first, head.dropout, *options.rng);
  }
  return tape.add(tape.matmul(first, tape.parameter(head.weight)), tape.parameter(head.bias));
}

ChoiceScores score_choices(EncoderAdapter& adapter, ChoiceHead& head,
                           std::span<const EncodedInput> inputs) {
  if (inputs.size() < 2 || inputs.size() > 3) {
    throw ArgumentError(kModule, "expected 2 or 3 candidates, got " + std::to_string(inputs.size()));
  }
  nn::Tape tape;
  const Matrix& z = tape.value(candidate_logits(tape, adapter, head, inputs, {}));
  return softmax_scores(std::vector<double>(z.data(), z.data() + z.size()));
}

std::vector<ChoiceExample> make_validation_examples(std::span<const StatementPair> pairs,
                                                    TemplateId variant,
                                                    const PromptOptions& options) {
  std::vector<ChoiceExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    ChoiceExample ex;
    ex.id = p.id;
    ex.candidates = {build_validation_input(variant, p.s1, options),
                     build_validation_input(variant, p.s2, options)};
    if (p.gold_sensible_index) ex.gold = *p.gold_sensible_index - 1;
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<ChoiceExample> make_explanation_examples(std::span<const ExplanationExample> examples,
                                                     TemplateId variant) {
  std::vector<ChoiceExample> out;
  out.reserve(examples.size());
  for (const auto& e : examples) {
    ChoiceExample ex;
    ex.id = e.id;
    TemplateId used = variant;
    if (variant.variant == Variant::kPPlusC && !e.true_statement) {
      used.variant = Variant::kP;
      ex.fell_back = true;
    }
    for (const auto& option : e.options) {
      ex.candidates.push_back(build_explanation_input(used, e.false_statement, option,
                                                      e.true_statement));
    }
    if (e.gold_option_index) ex.gold = *e.gold_option_index - 1;
    out.push_back(std::move(ex));
  }
  return out;
}

TrainConfig TrainConfig::validation_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::explanation_defaults(Variant variant) {
  TrainConfig c;
  c.batch_size = 36;
  c.learning_rate = 1e-5;
  c.epochs = 8;
  c.max_len = variant == Variant::kPPlusC ? 86 : 50;
  return c;
}

void TrainConfig::validate() const {
  if (batch_size <= 0) throw ConfigError(kModule, "train.batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError(kModule, "train.learning_rate must be positive");
  if (epochs < 0) throw ConfigError(kModule, "train.epochs must be non-negative");
  if (max_len < 8) throw ConfigError(kModule, "train.max_len must be at least 8");
  if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError(kModule, "train.grad_clip must be positive");
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0) {
    throw ConfigError(kModule, "train.warmup_fraction must be in [0, 1]");
  }
  if (weight_decay < 0.0) throw ConfigError(kModule, "train.weight_decay must be non-negative");
  if (!(adam_eps > 0.0)) throw ConfigError(kModule, "train.adam_eps must be positive");
  if (head_dropout < 0.0 || head_dropout >= 1.0) {
    throw ConfigError(kModule, "train.head_dropout must be in [0, 1)");
  }
}

double choice_accuracy(EncoderAdapter& adapter, ChoiceHead& head,
                       std::span<const ChoiceExample> examples, std::size_t max_len) {
  std::size_t correct = 0, labelled = 0;
  for (const auto& ex : examples) {
    if (!ex.gold) continue;
    const auto inputs = encode_all(adapter, ex, max_len);
    const auto scores = score_choices(adapter, head, inputs);
    ++labelled;
    if (static_cast<int>(scores.argmax()) == *ex.gold) ++correct;
  }
  if (labelled == 0) throw DataError(kModule, "no labelled examples to evaluate");
  return static_cast<double>(correct) / static_cast<double>(labelled);
}

TrainResult train(EncoderAdapter& adapter, ChoiceHead& head, std::span<const ChoiceExample> train_set,
                  std::span<const ChoiceExample> dev_set, const TrainConfig& config) {
  config.validate();
  const auto max_len = static_cast<std::size_t>(config.max_len);
  std::vector<std::vector<EncodedInput>> encoded;
  std::vector<int> gold;
  encoded.reserve(train_set.size());
  for (const auto& ex : train_set) {
    if (!ex.gold) throw DataError(kModule, "training example " + ex.id + " has no gold label");
    if (*ex.gold < 0 || *ex.gold >= static_cast<int>(ex.candidates.size())) {
      throw DataError(kModule, "training example " + ex.id + " has an out-of-range label");
    }
    encoded.push_back(encode_all(adapter, ex, max_len));
    gold.push_back(*ex.gold);
  }
  std::vector<ChoiceExample> dev_labelled;
  for (const auto& ex : dev_set) {
    if (ex.gold) dev_labelled.push_back(ex);
  }

  std::vector<nn::Parameter*> params = adapter.parameters();
  for (nn::Parameter* p : head.parameters()) params.push_back(p);
  nn::Adam optimizer(params, {0.9, 0.999, config.adam_eps, config.weight_decay});

  const std::size_t n = encoded.size();
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t batches_per_epoch = (n + bs - 1) / bs;
  const auto total_steps = static_cast<std::int64_t>(batches_per_epoch) * config.epochs;
  const auto warmup = static_cast<std::int64_t>(
      std::llround(config.warmup_fraction * static_cast<double>(total_steps)));
  const nn::LinearWarmupSchedule schedule(config.learning_rate, total_steps, warmup);

  std::mt19937_64 rng(config.seed);
  const double saved_dropout = head.dropout;
  head.dropout = config.head_dropout;
  ForwardOptions train_mode{true, &rng};

  TrainResult result;
  std::optional<double> best_dev;
  std::vector<Matrix> best_values;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs && n > 0; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = b * bs, end = std::min(n, begin + bs);
      optimizer.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t idx = order[k];
        nn::Tape tape;
        const nn::Var logits = candidate_logits(tape, adapter, head, encoded[idx], train_mode);
        const int target = gold[idx];
        const nn::Var loss = tape.cross_entropy(logits, std::span<const int>(&target, 1));
        batch_loss += tape.scalar(loss);
        tape.backward(tape.scale(loss, 1.0 / static_cast<double>(end - begin)));
      }
      if (!std::isfinite(batch_loss)) {
        head.dropout = saved_dropout;
        throw DivergenceError(kModule, "non-finite loss in epoch " + std::to_string(epoch) +
                                           ", batch " + std::to_string(b + 1));
      }
      epoch_loss += batch_loss;
      if (config.grad_clip) nn::clip_grad_norm(params, *config.grad_clip);
      optimizer.step(schedule.at(optimizer.steps()));
      if (!nn::all_finite(params)) {
        head.dropout = saved_dropout;
        throw DivergenceError(kModule, "non-finite parameters after epoch " +
                                           std::to_string(epoch) + ", batch " +
                                           std::to_string(b + 1));
      }
    }

    EpochLog entry{epoch, epoch_loss / static_cast<double>(n), std::nullopt};
    if (!dev_labelled.empty()) {
      entry.dev_accuracy = choice_accuracy(adapter, head, dev_labelled, max_len);
      if (!best_dev || *entry.dev_accuracy > *best_dev) {
        best_dev = entry.dev_accuracy;
        result.best_epoch = epoch;
        best_values.clear();
        for (const nn::Parameter* p : params) best_values.push_back(p->value);
      }
    } else {
      result.best_epoch = epoch;
    }
    result.log.push_back(entry);
  }
  if (!best_values.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  }
  for (nn::Parameter* p : params) p->zero_grad();
  head.dropout = saved_dropout;
  result.steps = optimizer.steps();
  return result;
}

ValidationPrediction validation_from_scores(ChoiceScores scores) {
  ValidationPrediction out;
  out.sensible_index = static_cast<int>(scores.argmax()) + 1;
  out.against_label = 3 - out.sensible_index;
  out.scores = std::move(scores);
  return out;
}

ValidationPrediction predict_validation(EncoderAdapter& adapter, ChoiceHead& head,
                                        const StatementPair& pair, TemplateId variant,
                                        std::size_t max_len, const PromptOptions& options) {
  const std::vector<EncodedInput> inputs = {
      encode_choice(adapter, build_validation_input(variant, pair.s1, options), max_len),
      encode_choice(adapter, build_validation_input(variant, pair.s2, options), max_len)};
  return validation_from_scores(score_choices(adapter, head, inputs));
}

ExplanationPrediction predict_explanation(EncoderAdapter& adapter, ChoiceHead& head,
                                          const ExplanationExample& example, TemplateId variant,
                                          std::size_t max_len) {
  const auto built = make_explanation_examples(std::span(&example, 1), variant);
  const auto inputs = encode_all(adapter, built.front(), max_len);
  ExplanationPrediction out;
  out.scores = score_choices(adapter, head, inputs);
  out.label = static_cast<int>(out.scores.argmax()) + 1;
  out.fell_back = built.front().fell_back;
  return out;
}

}  // namespace comve
