#include "comve/omcs_pretrainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "comve/error.hpp"
#include "comve/nn/optim.hpp"

namespace comve {
namespace {

constexpr const char* kModule = "omcs_pretrainer";

// splitmix64 finaliser; derives independent per-example mask seeds.
std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

MaskingConfig with_seed(MaskingConfig c, std::uint64_t seed) {
  c.seed = seed;
  return c;
}

}  // namespace

void MaskingConfig::validate() const {
  if (mask_rate < 0.0 || mask_rate >= 1.0) throw ConfigError(kModule, "mask.mask_rate must be in [0, 1)");
  for (double f : {replace_mask_frac, replace_random_frac, keep_frac}) {
    if (f < 0.0 || f > 1.0) throw ConfigError(kModule, "mask fractions must be in [0, 1]");
  }
  if (std::abs(replace_mask_frac + replace_random_frac + keep_frac - 1.0) > 1e-9) {
    throw ConfigError(kModule, "mask fractions must sum to 1");
  }
}

MaskVocabulary MaskVocabulary::from(const Tokenizer& tokenizer) {
  MaskVocabulary v;
  v.mask_id = tokenizer.mask_id();
  for (int id = 0; id < tokenizer.size(); ++id) {
    if (!tokenizer.is_special(id)) v.random_pool.push_back(id);
  }
  return v;
}

std::vector<std::size_t> special_positions(std::span<const int> token_ids,
                                           const Tokenizer& tokenizer) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    if (tokenizer.is_special(token_ids[i])) out.push_back(i);
  }
  return out;
}

MaskedSequence mask_tokens(std::span<const int> token_ids, const MaskingConfig& config,
                           std::span<const std::size_t> special, const MaskVocabulary& vocabulary) {
  config.validate();
  MaskedSequence out;
  out.token_ids.assign(token_ids.begin(), token_ids.end());
  out.targets.assign(token_ids.size(), nn::kIgnoreTarget);

  std::vector<char> is_special(token_ids.size(), 0);
  for (std::size_t p : special) {
    if (p >= token_ids.size()) throw ArgumentError(kModule, "special position out of range");
    is_special[p] = 1;
  }
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    if (!is_special[i]) eligible.push_back(i);
  }
  const auto count = static_cast<std::size_t>(
      std::llround(config.mask_rate * static_cast<double>(eligible.size())));
  if (count == 0) return out;

  std::mt19937_64 rng(config.seed);
  // Partial Fisher-Yates: the first `count` entries become a uniform sample
  // in random order.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
    std::swap(eligible[i], eligible[pick(rng)]);
  }
  const auto n_mask = static_cast<std::size_t>(
      std::llround(config.replace_mask_frac * static_cast<double>(count)));
  auto n_random = static_cast<std::size_t>(
      std::llround(config.replace_random_frac * static_cast<double>(count)));
  n_random = std::min(n_random, count - std::min(n_mask, count));
  if (vocabulary.random_pool.empty()) n_random = 0;

  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t pos = eligible[k];
    out.targets[pos] = token_ids[pos];
    out.selected.push_back(pos);
    if (k < n_mask) {
      out.token_ids[pos] = vocabulary.mask_id;
      ++out.masked;
    } else if (k < n_mask + n_random) {
      std::uniform_int_distribution<std::size_t> pick(0, vocabulary.random_pool.size() - 1);
      out.token_ids[pos] = vocabulary.random_pool[pick(rng)];
      ++out.randomized;
    } else {
      ++out.kept;
    }
  }
  std::sort(out.selected.begin(), out.selected.end());
  return out;
}

void PretrainConfig::validate() const {
  if (batch_size <= 0) throw ConfigError(kModule, "pretrain.batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError(kModule, "pretrain.learning_rate must be positive");
  if (epochs < 0) throw ConfigError(kModule, "pretrain.epochs must be non-negative");
  if (max_len < 3) throw ConfigError(kModule, "pretrain.max_len must be at least 3");
  if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError(kModule, "pretrain.grad_clip must be positive");
}

EncodedInput encode_sentence(const Tokenizer& tokenizer, std::string_view sentence,
                             std::size_t max_len) {
  EncodedInput in;
  in.token_ids.push_back(tokenizer.cls_id());
  for (const auto& p : tokenizer.tokenize(sentence)) {
    if (in.token_ids.size() + 1 >= max_len) {
      in.overflow = true;
      break;
    }
    in.token_ids.push_back(p.id);
  }
  in.token_ids.push_back(tokenizer.sep_id());
  in.type_ids.assign(in.token_ids.size(), 0);
  in.attention_mask.assign(in.token_ids.size(), 1);
  return in;
}

double masked_lm_loss(TransformerEncoder& model, std::span<const std::string> sentences,
                      const MaskingConfig& config, std::size_t max_len) {
  const Tokenizer& tok = model.tokenizer();
  const MaskVocabulary vocab = MaskVocabulary::from(tok);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    EncodedInput in = encode_sentence(tok, sentences[i], max_len);
    const auto special = special_positions(in.token_ids, tok);
    const auto masked = mask_tokens(in.token_ids, with_seed(config, mix(config.seed, i)), special, vocab);
    if (masked.selected.empty()) continue;
    in.token_ids = masked.token_ids;
    nn::Tape tape;
    const nn::Var loss = tape.cross_entropy(model.mlm_logits(tape, in, {}), masked.targets);
    total += tape.scalar(loss) * static_cast<double>(masked.selected.size());
    count += masked.selected.size();
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

PretrainLog pretrain(TransformerEncoder& model, std::span<const std::string> corpus,
                     const MaskingConfig& mask_config, const PretrainConfig& run_config) {
  mask_config.validate();
  run_config.validate();
  if (corpus.empty()) throw DataError(kModule, "empty pretraining corpus");
  const auto max_len = static_cast<std::size_t>(run_config.max_len);
  if (max_len > static_cast<std::size_t>(model.max_positions())) {
    throw ConfigError(kModule, "pretrain.max_len exceeds the encoder's max_positions");
  }
  const Tokenizer& tok = model.tokenizer();
  const MaskVocabulary vocab = MaskVocabulary::from(tok);

  std::vector<EncodedInput> encoded;
  std::vector<std::vector<std::size_t>> specials;
  encoded.reserve(corpus.size());
  for (const auto& s : corpus) {
    encoded.push_back(encode_sentence(tok, s, max_len));
    specials.push_back(special_positions(encoded.back().token_ids, tok));
  }

  const std::size_t eval_n = std::min(run_config.eval_sentences, corpus.size());
  const auto eval_set = corpus.subspan(0, eval_n);
  const MaskingConfig eval_masks = with_seed(mask_config, mix(mask_config.seed, 0xE7A1));

  PretrainLog log;
  log.initial_eval_loss = masked_lm_loss(model, eval_set, eval_masks, max_len);

  std::vector<nn::Parameter*> params = model.parameters();
  nn::Adam optimizer(params, {0.9, 0.999, 1e-8, run_config.weight_decay});
  const std::size_t n = encoded.size();
  const auto bs = static_cast<std::size_t>(run_config.batch_size);
  const std::size_t batches = (n + bs - 1) / bs;
  const auto total_steps = static_cast<std::int64_t>(batches) * run_config.epochs;
  const nn::LinearWarmupSchedule schedule(
      run_config.learning_rate, total_steps,
      static_cast<std::int64_t>(std::llround(run_config.warmup_fraction * static_cast<double>(total_steps))));

  std::mt19937_64 rng(run_config.seed);
  const ForwardOptions train_mode{true, &rng};
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= run_config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    std::size_t epoch_count = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * bs, end = std::min(n, begin + bs);
      std::vector<MaskedSequence> masked;
      std::size_t batch_targets = 0;
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t idx = order[k];
        const std::uint64_t seed = mix(mix(mask_config.seed, static_cast<std::uint64_t>(epoch)), idx);
        masked.push_back(mask_tokens(encoded[idx].token_ids, with_seed(mask_config, seed),
                                     specials[idx], vocab));
        batch_targets += masked.back().selected.size();
      }
      if (batch_targets == 0) continue;  // no loss, no gradient, no step

      optimizer.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const MaskedSequence& m = masked[k - begin];
        if (m.selected.empty()) continue;
        EncodedInput in = encoded[order[k]];
        in.token_ids = m.token_ids;
        nn::Tape tape;
        const nn::Var loss = tape.cross_entropy(model.mlm_logits(tape, in, train_mode), m.targets);
        const double weight = static_cast<double>(m.selected.size()) / static_cast<double>(batch_targets);
        batch_loss += tape.scalar(loss) * weight;
        tape.backward(tape.scale(loss, weight));
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError(kModule, "non-finite MLM loss in epoch " + std::to_string(epoch) +
                                           ", batch " + std::to_string(b + 1));
      }
      if (run_config.grad_clip) nn::clip_grad_norm(params, *run_config.grad_clip);
      optimizer.step(schedule.at(optimizer.steps()));
      epoch_total += batch_loss * static_cast<double>(batch_targets);
      epoch_count += batch_targets;
    }
    log.epoch_loss.push_back(epoch_count == 0 ? 0.0 : epoch_total / static_cast<double>(epoch_count));
  }
  for (nn::Parameter* p : params) p->zero_grad();
  log.steps = optimizer.steps();
  log.final_eval_loss = masked_lm_loss(model, eval_set, eval_masks, max_len);
  return log;
}

}  // namespace comve
