// Acceptance suite: one PASS / FAIL / SKIP line per criterion. Exits non-zero
// when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "comve/choice_model.hpp"
#include "comve/corpus_io.hpp"
#include "comve/eval_harness.hpp"
#include "comve/lm_probe.hpp"
#include "comve/omcs_pretrainer.hpp"
#include "comve/prompt_builder.hpp"
#include "support/test_support.hpp"

namespace {

using namespace comve;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status = Status::kPass;
  std::string detail;
};

Outcome pass(std::string d) { return {Status::kPass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::kFail, std::move(d)}; }
Outcome skip(std::string d) { return {Status::kSkip, std::move(d)}; }
Outcome check(bool ok, std::string d) { return {ok ? Status::kPass : Status::kFail, std::move(d)}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Criterion {
  std::string name;
  double budget_seconds;  // 0: no runtime bound
  std::function<Outcome()> body;
};

// ---------------------------------------------------------------------------

Outcome template_goldens() {
  std::ifstream in(testing::fixture_path("comve/template_goldens.json"));
  const auto g = nlohmann::json::parse(in);
  std::set<std::string> variants;
  int checked = 0;
  auto compare = [&](const std::string& got, const nlohmann::json& row) -> bool {
    ++checked;
    return got == row.at("expected").get<std::string>();
  };
  for (const auto& row : g.at("validation")) {
    const auto id = TemplateId::parse(Task::kValidation, row.at("template").get<std::string>());
    variants.insert("A/" + id.tag());
    if (!compare(render(build_validation_input(id, row.at("statement").get<std::string>())), row)) {
      return fail("mismatch for " + row.dump());
    }
  }
  PromptOptions quoted;
  quoted.p2_quotes = true;
  for (const auto& row : g.at("validation_quoted")) {
    const auto id = TemplateId::parse(Task::kValidation, row.at("template").get<std::string>());
    if (!compare(render(build_validation_input(id, row.at("statement").get<std::string>(), quoted)), row)) {
      return fail("mismatch for " + row.dump());
    }
  }
  for (const auto& row : g.at("explanation")) {
    const auto id = TemplateId::parse(Task::kExplanation, row.at("template").get<std::string>());
    variants.insert("B/" + id.tag());
    std::optional<std::string> truth;
    if (row.contains("true")) truth = row.at("true").get<std::string>();
    const auto built = build_explanation_input(id, row.at("false").get<std::string>(),
                                               row.at("option").get<std::string>(), truth);
    if (!compare(render(built), row)) return fail("mismatch for " + row.dump());
  }
  return check(variants.size() == 6, std::to_string(checked) + " goldens byte-exact over " +
                                         std::to_string(variants.size()) + " variants");
}

Outcome softmax_properties() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> logit(0.0, 10.0);
  std::uniform_real_distribution<double> shift(-1e3, 1e3);
  double worst_sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t k = 2 + (rng() % 2);
    std::vector<double> z(k);
    for (double& v : z) v = logit(rng);
    const auto s = softmax_scores(z);
    double sum = 0.0;
    for (double p : s.probabilities) {
      if (p < 0.0 || p > 1.0) return fail("probability outside [0, 1]");
      sum += p;
    }
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    const double c = shift(rng);
    for (double& v : z) v += c;
    if (softmax_scores(z).argmax() != s.argmax()) return fail("argmax changed under a shift");
  }
  const auto closed = softmax_scores({0.0, std::log(3.0)});
  const double err = std::max(std::abs(closed.probabilities[0] - 0.25), std::abs(closed.probabilities[1] - 0.75));
  return check(worst_sum <= 1e-6 && err <= 1e-9,
               "max |sum-1| = " + fmt("%.2e", worst_sum) + ", closed-form error " + fmt("%.2e", err) +
                   ", 10000 shifted argmax checks");
}

Outcome gradient_check() {
  const Tokenizer tok = testing::word_tokenizer({"a", "b", "c", "d", "e", "f", "g", "h"});
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f", "g", "h"};
  std::mt19937_64 rng(77);
  double worst = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    const int hidden = 3 + static_cast<int>(rng() % 12);
    testing::StubEncoder enc(tok, hidden, rng());
    ChoiceHead head = ChoiceHead::create(hidden, rng(), 0.5);
    const std::size_t k = 2 + rng() % 2;
    std::vector<EncodedInput> inputs;
    for (std::size_t c = 0; c < k; ++c) {
      std::string s;
      const std::size_t len = 1 + rng() % 5;
      for (std::size_t w = 0; w < len; ++w) s += (w ? " " : "") + words[rng() % words.size()];
      inputs.push_back(encode_choice(enc, build_validation_input({Task::kValidation, Variant::kOrig}, s), 16));
    }
    const int gold = static_cast<int>(rng() % k);

    for (auto* p : head.parameters()) p->zero_grad();
    nn::Tape tape;
    std::vector<nn::Var> logits;
    for (const auto& in : inputs) logits.push_back(candidate_logit(tape, enc, head, in, {}));
    tape.backward(tape.cross_entropy(tape.concat_cols(logits), std::span<const int>(&gold, 1)));

    // Central differences on the closed-form loss -log softmax(z)[gold].
    auto loss = [&] {
      return -std::log(score_choices(enc, head, inputs).probabilities[static_cast<std::size_t>(gold)]);
    };
    double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
    for (auto* p : head.parameters()) {
      for (Eigen::Index i = 0; i < p->value.size(); ++i) {
        const double orig = p->value.data()[i];
        const double h = 1e-6;
        p->value.data()[i] = orig + h;
        const double plus = loss();
        p->value.data()[i] = orig - h;
        const double minus = loss();
        p->value.data()[i] = orig;
        const double numeric = (plus - minus) / (2 * h);
        const double analytic = p->grad.data()[i];
        diff += (numeric - analytic) * (numeric - analytic);
        norm_a += analytic * analytic;
        norm_n += numeric * numeric;
      }
    }
    const double rel = std::sqrt(diff) / std::max({std::sqrt(norm_a), std::sqrt(norm_n), 1e-12});
    worst = std::max(worst, rel);
  }
  return check(worst < 1e-4, "max relative error " + fmt("%.2e", worst) + " over 100 draws");
}

Outcome masking_statistics() {
  const Tokenizer tok = testing::word_tokenizer({"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"});
  const MaskVocabulary vocab = MaskVocabulary::from(tok);
  std::mt19937_64 rng(5);
  std::vector<int> ids;
  std::size_t eligible = 0;
  // Sentences of 20 word tokens wrapped in CLS/SEP until 10,000 eligible tokens.
  while (eligible < 10000) {
    ids.push_back(tok.cls_id());
    for (int w = 0; w < 20 && eligible < 10000; ++w, ++eligible) {
      ids.push_back(5 + static_cast<int>(rng() % 10));
    }
    ids.push_back(tok.sep_id());
  }
  const auto special = special_positions(ids, tok);
  MaskingConfig cfg;
  cfg.seed = 13;
  const auto m = mask_tokens(ids, cfg, special, vocab);
  const auto n = static_cast<double>(m.selected.size());
  const std::size_t expected = static_cast<std::size_t>(std::llround(0.15 * static_cast<double>(eligible)));
  std::size_t special_corrupted = 0;
  for (std::size_t p : special) {
    if (m.token_ids[p] != ids[p] || m.targets[p] != nn::kIgnoreTarget) ++special_corrupted;
  }
  const double fm = m.masked / n, fr = m.randomized / n, fk = m.kept / n;
  const bool ok = m.selected.size() == expected && std::abs(fm - 0.8) <= 0.02 &&
                  std::abs(fr - 0.1) <= 0.02 && std::abs(fk - 0.1) <= 0.02 && special_corrupted == 0;
  return check(ok, std::to_string(m.selected.size()) + "/" + std::to_string(eligible) +
                       " selected, split " + fmt("%.3f", fm) + "/" + fmt("%.3f", fr) + "/" +
                       fmt("%.3f", fk) + ", " + std::to_string(special_corrupted) +
                       " special tokens corrupted");
}

Outcome pll_oracle() {
  const Tokenizer tok = testing::word_tokenizer({"a", "tuna", "is", "mammal", "dolphin"});
  if (tok.size() > 10) return fail("toy vocabulary too large");
  // Hand-specified conditional table: row = left neighbour, column = token.
  nn::Matrix table = nn::Matrix::Constant(tok.size(), tok.size(), 0.02);
  auto set_row = [&](int left, std::initializer_list<std::pair<const char*, double>> cells) {
    double rest = 1.0;
    for (const auto& [w, p] : cells) {
      table(left, tok.id(w)) = p;
      rest -= p;
    }
    const double others = static_cast<double>(tok.size()) - static_cast<double>(cells.size());
    for (int c = 0; c < tok.size(); ++c) {
      bool listed = false;
      for (const auto& cell : cells) listed |= tok.id(cell.first) == c;
      if (!listed) table(left, c) = rest / others;
    }
  };
  set_row(tok.cls_id(), {{"a", 0.6}, {"tuna", 0.1}});
  set_row(tok.id("a"), {{"tuna", 0.3}, {"dolphin", 0.4}, {"mammal", 0.2}});
  set_row(tok.id("tuna"), {{"is", 0.7}});
  set_row(tok.id("dolphin"), {{"is", 0.8}});
  set_row(tok.id("is"), {{"a", 0.9}});
  testing::BigramMlm mlm(tok, table);

  double worst = 0.0;
  for (const std::string s : {"a tuna is a mammal", "a dolphin is a mammal", "tuna is mammal"}) {
    const auto v = pll_score(mlm, s);
    int left = tok.cls_id();
    for (std::size_t i = 0; i < v.tokens.size(); ++i) {
      const int id = tok.id(v.tokens[i]);
      worst = std::max(worst, std::abs(v.scores[i] - (-std::log(table(left, id)))));
      left = id;
    }
  }
  testing::UniformMlm uniform(tok);
  const auto u = pll_score(uniform, "a tuna is a mammal");
  const double exact = 5.0 * std::log(static_cast<double>(tok.size()));
  return check(worst <= 1e-9 && u.total == exact,
               "max table deviation " + fmt("%.1e", worst) + ", uniform total " + fmt("%.17g", u.total) +
                   " vs n*ln V " + fmt("%.17g", exact));
}

std::vector<StatementPair> separable_split(std::size_t n, std::uint64_t seed, const std::string& prefix,
                                           std::vector<std::string>* texts) {
  const auto data = testing::make_separable_pairs(n, seed);
  std::vector<StatementPair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    pairs.push_back({prefix + std::to_string(i), data.pairs[i].first, data.pairs[i].second, data.sensible[i]});
  }
  if (texts) texts->insert(texts->end(), data.texts.begin(), data.texts.end());
  return pairs;
}

Outcome smoke_train() {
  std::vector<std::string> texts;
  const auto train_pairs = separable_split(200, 1, "t", &texts);
  const auto held_out = separable_split(200, 2, "h", nullptr);
  const TemplateId orig{Task::kValidation, Variant::kOrig};
  const auto train_set = make_validation_examples(train_pairs, orig);
  const auto test_set = make_validation_examples(held_out, orig);

  TransformerConfig arch;
  arch.hidden_size = 16;
  arch.num_layers = 1;
  arch.num_heads = 2;
  arch.ffn_size = 32;
  arch.max_positions = 16;
  arch.dropout = 0.0;
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.learning_rate = 3e-3;
  cfg.epochs = 8;
  cfg.max_len = 16;
  cfg.seed = 42;
  cfg.head_dropout = 0.0;

  auto run_once = [&](double& acc, std::vector<double>& logits) {
    TransformerEncoder enc(arch, Tokenizer::build(texts, VocabOptions{}), 7);
    ChoiceHead head = ChoiceHead::create(arch.hidden_size, 8);
    train(enc, head, train_set, {}, cfg);
    acc = choice_accuracy(enc, head, test_set, 16);
    for (const auto& p : held_out) {
      const auto pred = predict_validation(enc, head, p, orig, 16);
      logits.insert(logits.end(), pred.scores.logits.begin(), pred.scores.logits.end());
    }
  };
  double acc1 = 0.0, acc2 = 0.0;
  std::vector<double> l1, l2;
  run_once(acc1, l1);
  run_once(acc2, l2);
  const bool deterministic = l1 == l2;
  return check(acc1 >= 0.95 && deterministic,
               "held-out accuracy " + format_percent(acc1) + "% after training on 200 examples, " +
                   (deterministic ? "bitwise identical rerun" : "rerun differs"));
}

Outcome round_trip_io() {
  testing::TempDir dir;
  std::mt19937_64 rng(9);
  for (const auto& map : {ColumnMap::validation_default(), ColumnMap::explanation_default()}) {
    std::vector<PredictionRecord> records;
    for (int i = 0; i < 2000; ++i) {
      std::string id = "r" + std::to_string(i);
      if (i % 7 == 0) id += ", with comma";
      if (i % 11 == 0) id += " \"quoted\"";
      records.push_back({id, 1 + static_cast<int>(rng() % map.label_count())});
    }
    write_predictions(records, dir / "p.csv", map);
    auto back = load_answers(dir / "p.csv", map);
    std::multiset<PredictionRecord> a(records.begin(), records.end()), b(back.begin(), back.end());
    if (a != b) return fail("reloaded predictions differ");
  }
  const auto pairs = load_validation_set(testing::fixture_path("comve/subtaskA_data.csv"),
                                         testing::fixture_path("comve/subtaskA_answers.csv"),
                                         ColumnMap::validation_default());
  const auto expl = load_explanation_set(testing::fixture_path("comve/subtaskB_data.csv"),
                                         testing::fixture_path("comve/subtaskB_answers.csv"),
                                         ColumnMap::explanation_default(), &pairs);
  const bool fixtures_ok = pairs.size() == 5 && pairs[3].s2 == "Tim bought a new TV, yesterday." &&
                           pairs[4].s1 == "He said \"hello\", then left." && expl.size() == 3 &&
                           expl[1].options[2] == "In the supermarket, there is too much food to eat." &&
                           expl[2].false_statement == "Cats can fly, obviously." &&
                           expl[0].true_statement == "He cooked the egg with a pan.";
  return check(fixtures_ok, "2 x 2000 records round-tripped as multisets; embedded-comma fixtures parsed");
}

// Gated on checkpoints and official data that are not bundled.
std::optional<fs::path> env_path(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return fs::path(v);
}

Outcome zero_shot_probe() {
  const auto data = env_path("COMVE_DATA_DIR");
  const auto large = env_path("COMVE_LARGE_MLM");
  const auto omcs = env_path("COMVE_OMCS_MLM");
  if (!data || !large || !omcs) {
    return skip("needs COMVE_DATA_DIR (official dev files) plus COMVE_LARGE_MLM and COMVE_OMCS_MLM checkpoints");
  }
  const auto pairs = load_validation_set(*data / "dev" / "subtaskA_dev_data.csv",
                                         *data / "dev" / "subtaskA_gold_answers.csv",
                                         ColumnMap::validation_default());
  auto probe = [&](const fs::path& dir) {
    auto mlm = TransformerEncoder::load(dir);
    std::size_t correct = 0;
    for (const auto& p : pairs) correct += zero_shot_validate(*mlm, p, LengthNorm::kNone).label == p.gold_against_index();
    return 100.0 * static_cast<double>(correct) / static_cast<double>(pairs.size());
  };
  const double a_large = probe(*large), a_omcs = probe(*omcs);
  return check(pairs.size() == 997 && std::abs(a_large - 79.5) <= 2.0 && a_omcs > a_large,
               "large " + fmt("%.1f", a_large) + ", omcs " + fmt("%.1f", a_omcs) + " on " +
                   std::to_string(pairs.size()) + " pairs");
}

Outcome fine_tune_directional() {
  const auto data = env_path("COMVE_DATA_DIR");
  const auto encoder = env_path("COMVE_SMALL_ENCODER");
  if (!data || !encoder) return skip("needs COMVE_DATA_DIR (official train/dev files) and COMVE_SMALL_ENCODER");
  const auto map = ColumnMap::validation_default();
  const auto train_pairs = load_validation_set(*data / "train" / "subtaskA_data_all.csv",
                                               *data / "train" / "subtaskA_answers_all.csv", map);
  const auto dev_pairs = load_validation_set(*data / "dev" / "subtaskA_dev_data.csv",
                                             *data / "dev" / "subtaskA_gold_answers.csv", map);
  std::vector<RunResult> runs;
  for (Variant v : {Variant::kOrig, Variant::kP1, Variant::kP2}) {
    const TemplateId id{Task::kValidation, v};
    auto enc = TransformerEncoder::load(*encoder);
    const TrainConfig cfg = TrainConfig::validation_defaults();
    ChoiceHead head = ChoiceHead::create(enc->hidden_size(), cfg.seed);
    train(*enc, head, make_validation_examples(train_pairs, id), {}, cfg);
    RunResult r;
    r.encoder_tag = enc->name();
    r.template_tag = id.tag();
    r.run_id = r.encoder_tag + "+" + r.template_tag;
    for (const auto& p : dev_pairs) {
      r.predictions.push_back({p.id, predict_validation(*enc, head, p, id, cfg.max_len).against_label});
    }
    r.accuracy = accuracy(r.predictions, golds_from(std::span<const StatementPair>(dev_pairs)));
    runs.push_back(std::move(r));
  }
  const auto table = compare_runs(runs);
  const double orig = runs[0].accuracy * 100, best = std::max(runs[1].accuracy, runs[2].accuracy) * 100;
  std::printf("%s", table.render_text().c_str());
  return check(best >= orig - 0.5 && table.rows.size() == 3,
               "ORIG " + fmt("%.1f", orig) + ", best prompted " + fmt("%.1f", best));
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"template goldens", 1.0, template_goldens},
      {"softmax properties", 5.0, softmax_properties},
      {"gradient check", 30.0, gradient_check},
      {"masking statistics", 5.0, masking_statistics},
      {"PLL oracle", 5.0, pll_oracle},
      {"end-to-end smoke train", 120.0, smoke_train},
      {"round-trip I/O", 0.0, round_trip_io},
      {"zero-shot probe (network-gated)", 0.0, zero_shot_probe},
      {"fine-tuning template direction (network-gated)", 0.0, fine_tune_directional},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    if (o.status == Status::kPass && c.budget_seconds > 0 && secs > c.budget_seconds) {
      o = fail(o.detail + "; exceeded " + fmt("%.0f", c.budget_seconds) + " s budget");
    }
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    std::printf("%s  %-48s %8.3f s  %s\n", tag, c.name.c_str(), secs, o.detail.c_str());
    std::fflush(stdout);
    if (o.status == Status::kFail) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
