#include "cli/commands.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "comve/eval_harness.hpp"
#include "comve/lm_probe.hpp"

namespace comve::cli {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kModule = "cli";

// ---------------------------------------------------------------------------
// Configuration helpers

fs::path out_dir_from(const RunConfig& config) {
  const fs::path dir(config.require("out_dir"));
  fs::create_directories(dir);
  return dir;
}

int workers_from(const RunConfig& config) {
  const int workers = config.get_int("workers", 1);
  if (workers < 1) throw ConfigError("config", "field 'workers': must be at least 1");
  return workers;
}

std::uint64_t seed_from(const RunConfig& config) { return config.get_u64("seed", 42); }

std::optional<double> optional_clip(const RunConfig& config, const std::string& key,
                                    std::optional<double> fallback) {
  const double v = config.get_double(key, fallback.value_or(0.0));
  if (v < 0.0) throw ConfigError("config", "field '" + key + "': must be non-negative");
  if (v == 0.0) return std::nullopt;
  return v;
}

char delimiter_from(const RunConfig& config) {
  const std::string d = config.get("columns.delimiter", ",");
  if (d == "\\t" || d == "tab") return '\t';
  if (d.size() != 1) {
    throw ConfigError("config", "field 'columns.delimiter': expected one character, got '" + d + "'");
  }
  return d[0];
}

std::vector<std::string> list_or(const RunConfig& config, const std::string& key,
                                 std::vector<std::string> fallback) {
  if (!config.has(key)) {
    std::string joined;
    for (const auto& f : fallback) joined += (joined.empty() ? "" : ",") + f;
    config.get(key, joined);
    return fallback;
  }
  return config.get_list(key);
}

ColumnMap pair_columns_from(const RunConfig& config) {
  ColumnMap map = ColumnMap::validation_default();
  map.delimiter = delimiter_from(config);
  map.data_header = config.get_bool("columns.data_header", map.data_header);
  map.id_column = config.get("columns.id", map.id_column);
  return map;
}

template <typename Fn>
auto with_field(const std::string& field, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ArgumentError& e) {
    throw ConfigError("config", "field '" + field + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Shared I/O

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(kModule, "cannot write " + path.string());
  out << text;
  if (!out) throw IoError(kModule, "failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(kModule, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(kModule, path.string() + ": " + e.what());
  }
}

std::unique_ptr<TransformerEncoder> load_encoder(const RunConfig& config, const std::string& key) {
  const std::string name = config.require(key);
  try {
    return TransformerEncoder::load(resolve_encoder_path(name));
  } catch (const ConfigError& e) {
    throw ConfigError("config", "field '" + key + "': " + e.what());
  }
}

// Runs fn(worker, index) over [0, n) with contiguous chunks per worker.
void parallel_for(std::size_t n, int workers, const std::function<void(int, std::size_t)>& fn) {
  const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(workers, n));
  if (w == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(0, i);
    return;
  }
  std::vector<std::exception_ptr> errors(w);
  std::vector<std::thread> threads;
  const std::size_t chunk = (n + w - 1) / w;
  for (std::size_t t = 0; t < w; ++t) {
    threads.emplace_back([&, t] {
      try {
        for (std::size_t i = t * chunk; i < std::min(n, (t + 1) * chunk); ++i) {
          fn(static_cast<int>(t), i);
        }
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Per-worker copies of a model, the first being the original.
struct EncoderPool {
  explicit EncoderPool(TransformerEncoder& base, int workers) : base_(base) {
    for (int i = 1; i < workers; ++i) {
      auto c = base.clone();
      copies_.emplace_back(static_cast<TransformerEncoder*>(c.release()));
    }
  }
  TransformerEncoder& get(int worker) {
    return worker == 0 ? base_ : *copies_[static_cast<std::size_t>(worker - 1)];
  }

 private:
  TransformerEncoder& base_;
  std::vector<std::unique_ptr<TransformerEncoder>> copies_;
};

struct Dataset {
  std::vector<StatementPair> pairs;               // task A
  std::vector<ExplanationExample> explanations;   // task B
  std::size_t size(Task task) const {
    return task == Task::kValidation ? pairs.size() : explanations.size();
  }
};

// `prefix` names the data keys: "<prefix>", "<prefix>_answers", "<prefix>_pairs".
// The "input" set uses the plain "answers" and "pairs" keys.
Dataset load_dataset(const RunConfig& config, Task task, const std::string& prefix,
                     bool required) {
  Dataset data;
  const std::string key = "data." + prefix;
  const auto path = required ? std::optional(config.existing_path(key))
                             : config.optional_existing_path(key);
  if (!path) return data;
  const std::string side = prefix == "input" ? "data." : key + "_";
  const auto answers = config.optional_existing_path(side + "answers");
  const ColumnMap columns = columns_from(config, task);
  if (task == Task::kValidation) {
    data.pairs = load_validation_set(*path, answers, columns);
  } else {
    std::vector<StatementPair> pair_source;
    const auto pairs_path = config.optional_existing_path(side + "pairs");
    if (pairs_path) pair_source = load_validation_set(*pairs_path, std::nullopt, pair_columns_from(config));
    data.explanations =
        load_explanation_set(*path, answers, columns, pairs_path ? &pair_source : nullptr);
  }
  return data;
}

std::vector<ChoiceExample> choice_examples(const Dataset& data, Task task, TemplateId variant,
                                           const PromptOptions& options) {
  return task == Task::kValidation ? make_validation_examples(data.pairs, variant, options)
                                   : make_explanation_examples(data.explanations, variant);
}

GoldLabels golds_of(const Dataset& data, Task task) {
  return task == Task::kValidation ? golds_from(std::span<const StatementPair>(data.pairs))
                                   : golds_from(std::span<const ExplanationExample>(data.explanations));
}

struct Predictions {
  std::vector<PredictionRecord> records;
  std::vector<ChoiceScores> scores;
  std::size_t fell_back = 0;
};

Predictions predict_dataset(TransformerEncoder& encoder, const ChoiceHead& head, const Dataset& data,
                            Task task, TemplateId variant, std::size_t max_len,
                            const PromptOptions& options, int workers) {
  const std::size_t n = data.size(task);
  Predictions p;
  p.records.resize(n);
  p.scores.resize(n);
  std::vector<char> fell_back(n, 0);
  const int w = static_cast<int>(std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1)));
  EncoderPool pool(encoder, w);
  std::vector<ChoiceHead> heads(static_cast<std::size_t>(w), head);
  parallel_for(n, w, [&](int worker, std::size_t i) {
    auto& enc = pool.get(worker);
    auto& h = heads[static_cast<std::size_t>(worker)];
    if (task == Task::kValidation) {
      auto pred = predict_validation(enc, h, data.pairs[i], variant, max_len, options);
      p.records[i] = {data.pairs[i].id, pred.against_label};
      p.scores[i] = std::move(pred.scores);
    } else {
      auto pred = predict_explanation(enc, h, data.explanations[i], variant, max_len);
      p.records[i] = {data.explanations[i].id, pred.label};
      p.scores[i] = std::move(pred.scores);
      fell_back[i] = pred.fell_back ? 1 : 0;
    }
  });
  p.fell_back = static_cast<std::size_t>(std::count(fell_back.begin(), fell_back.end(), 1));
  return p;
}

bool has_all_golds(const GoldLabels& golds, std::size_t n) { return n > 0 && golds.size() == n; }

RunResult make_run(const RunConfig& config, const std::string& encoder_tag,
                   const std::string& template_tag, Split default_split,
                   std::vector<PredictionRecord> predictions, double acc) {
  RunResult r;
  r.encoder_tag = config.get("run.encoder_tag", encoder_tag);
  r.template_tag = config.get("run.template_tag", template_tag);
  r.split = with_field("run.split", [&] {
    return parse_split(config.get("run.split", std::string(to_string(default_split))));
  });
  r.run_id = config.get("run.id", r.encoder_tag + "+" + r.template_tag);
  r.accuracy = acc;
  r.predictions = std::move(predictions);
  return r;
}

json train_config_json(const TrainConfig& c) {
  json j = {{"batch_size", c.batch_size},       {"learning_rate", c.learning_rate},
            {"epochs", c.epochs},               {"max_len", c.max_len},
            {"seed", c.seed},                   {"warmup_fraction", c.warmup_fraction},
            {"weight_decay", c.weight_decay},   {"adam_eps", c.adam_eps},
            {"head_dropout", c.head_dropout},   {"optimizer", "adam"}};
  j["grad_clip"] = c.grad_clip ? json(*c.grad_clip) : json(nullptr);
  return j;
}

json column_map_json(const ColumnMap& m) {
  return {{"delimiter", std::string(1, m.delimiter)},
          {"data_header", m.data_header},
          {"answers_header", m.answers_header},
          {"id_column", m.id_column},
          {"statement_columns", m.statement_columns},
          {"false_column", m.false_column},
          {"option_columns", m.option_columns},
          {"label_names", m.label_names},
          {"labels_mark_against", m.labels_mark_against}};
}

json token_vector_json(const TokenScoreVector& v) {
  return {{"tokens", v.tokens}, {"word_index", v.word_index}, {"scores", v.scores}, {"total", v.total}};
}

TokenScoreVector token_vector_from(const json& j) {
  try {
    return TokenScoreVector::from_scores(j.at("tokens").get<std::vector<std::string>>(),
                                         j.at("word_index").get<std::vector<int>>(),
                                         j.at("scores").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw ParseError(kModule, std::string("malformed score vector: ") + e.what());
  }
}

// One file per probed pair; the row of the statement flagged as
// against-commonsense carries the verdict glyph when gold is known.
void write_pair_heatmap(const fs::path& dir, const std::string& id,
                        const std::array<TokenScoreVector, 2>& vectors, int label,
                        std::optional<bool> correct) {
  std::vector<HeatmapRow> rows;
  for (int s = 0; s < 2; ++s) {
    HeatmapRow row;
    row.caption = "Statement " + std::to_string(s + 1) + (label == s + 1 ? " (against)" : "");
    row.vector = vectors[static_cast<std::size_t>(s)];
    if (label == s + 1) row.verdict = correct;
    rows.push_back(std::move(row));
  }
  emit_heatmap(rows, "Pair " + id, dir / (file_stem_for(id) + ".html"));
}

// ---------------------------------------------------------------------------
// Commands

void cmd_prepare(const RunConfig& config, std::ostream& out) {
  const Task task = task_from(config);
  const fs::path dir = out_dir_from(config);
  std::vector<std::string> texts;
  std::size_t records = 0;
  for (const std::string prefix : {"train", "dev", "input"}) {
    const Dataset data = load_dataset(config, task, prefix, false);
    records += data.size(task);
    for (const auto& p : data.pairs) {
      texts.push_back(p.s1);
      texts.push_back(p.s2);
    }
    for (const auto& e : data.explanations) {
      texts.push_back(e.false_statement);
      if (e.true_statement) texts.push_back(*e.true_statement);
      for (const auto& o : e.options) texts.push_back(o);
    }
  }
  std::size_t sentences = 0;
  if (auto corpus = config.optional_existing_path("data.corpus")) {
    auto lines = load_omcs_corpus(*corpus, static_cast<std::size_t>(config.get_int("corpus.min_tokens", 5)));
    sentences = lines.size();
    for (auto& l : lines) texts.push_back(std::move(l));
  }
  if (texts.empty()) {
    throw ConfigError("config", "prepare needs at least one of data.train, data.dev, data.input, data.corpus");
  }
  for (const std::string_view t : {prompt_text::kQaPrompt, prompt_text::kBecauseConnective,
                        prompt_text::kContextPrefix, prompt_text::kContextSuffix,
                        prompt_text::kQuestionPrefix, prompt_text::kQuestionSuffix}) {
    texts.emplace_back(t);
  }
  Tokenizer tokenizer = Tokenizer::build(texts, vocab_options_from(config), SpecialTokens{});
  TransformerConfig arch = transformer_config_from(config);
  TransformerEncoder encoder(arch, std::move(tokenizer), config.get_u64("model.seed", seed_from(config)));
  const fs::path enc_dir = dir / "encoder";
  encoder.save(enc_dir);
  config.write_snapshot(dir / kSnapshotFile);
  config.write_snapshot(enc_dir / kSnapshotFile);
  out << "prepared encoder '" << arch.name << "' with " << encoder.tokenizer().size()
      << " vocabulary entries from " << records << " records and " << sentences
      << " corpus sentences -> " << enc_dir.string() << "\n";
}

void cmd_pretrain(const RunConfig& config, std::ostream& out) {
  const fs::path dir = out_dir_from(config);
  auto encoder = load_encoder(config, "encoder");
  const auto corpus_path = config.existing_path("data.corpus");
  const auto corpus =
      load_omcs_corpus(corpus_path, static_cast<std::size_t>(config.get_int("corpus.min_tokens", 5)));
  if (corpus.empty()) throw DataError("corpus_io", "no usable sentences in " + corpus_path.string());
  const MaskingConfig mask = masking_config_from(config);
  const PretrainConfig run = pretrain_config_from(config);
  config.write_snapshot(dir / kSnapshotFile);
  const PretrainLog log = pretrain(*encoder, corpus, mask, run);
  encoder->save(dir);
  std::string lines;
  for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) {
    lines += json({{"epoch", e + 1}, {"loss", log.epoch_loss[e]}}).dump() + "\n";
  }
  lines += json({{"initial_eval_loss", log.initial_eval_loss},
                 {"final_eval_loss", log.final_eval_loss},
                 {"steps", log.steps}}).dump() + "\n";
  write_text(dir / "pretrain_log.jsonl", lines);
  out << "pretrained on " << corpus.size() << " sentences, " << log.steps << " steps; eval loss "
      << log.initial_eval_loss << " -> " << log.final_eval_loss << "\n";
}

void cmd_train(const RunConfig& config, std::ostream& out) {
  const Task task = task_from(config);
  const TemplateId variant = template_from(config, task);
  const PromptOptions prompt = prompt_options_from(config);
  const TrainConfig tc = train_config_from(config, task, variant);
  const fs::path dir = out_dir_from(config);
  const std::string encoder_source = config.require("encoder");
  auto encoder = load_encoder(config, "encoder");
  const int workers = workers_from(config);

  const Dataset train_data = load_dataset(config, task, "train", true);
  const Dataset dev_data = load_dataset(config, task, "dev", false);
  auto train_set = choice_examples(train_data, task, variant, prompt);
  auto dev_set = choice_examples(dev_data, task, variant, prompt);
  for (const auto& ex : train_set) {
    if (!ex.gold) throw DataError(kModule, "training record '" + ex.id + "' has no gold label");
  }
  std::erase_if(dev_set, [](const ChoiceExample& ex) { return !ex.gold; });

  config.write_snapshot(dir / kSnapshotFile);
  ChoiceHead head = ChoiceHead::create(encoder->hidden_size(), tc.seed);
  head.dropout = tc.head_dropout;
  const TrainResult result = train(*encoder, head, train_set, dev_set, tc);

  const fs::path model_dir = dir / "model";
  fs::create_directories(model_dir);
  encoder->save(model_dir / "encoder");
  head.save(model_dir / "head.bin");
  json model = {{"task", std::string(task_tag(task))},
                {"template", variant.tag()},
                {"encoder", encoder->name()},
                {"encoder_source", encoder_source},
                {"p2_quotes", prompt.p2_quotes},
                {"seed", tc.seed},
                {"train", train_config_json(tc)},
                {"columns", column_map_json(columns_from(config, task))},
                {"best_epoch", result.best_epoch},
                {"steps", result.steps}};
  write_text(model_dir / "model.json", model.dump(2) + "\n");
  config.write_snapshot(model_dir / kSnapshotFile);

  std::string log;
  for (const auto& e : result.log) {
    json j = {{"epoch", e.epoch}, {"loss", e.loss}};
    j["dev_accuracy"] = e.dev_accuracy ? json(*e.dev_accuracy) : json(nullptr);
    log += j.dump() + "\n";
  }
  write_text(dir / "train_log.jsonl", log);
  out << "trained " << task_tag(task) << "/" << variant.tag() << " on " << train_set.size()
      << " records for " << result.log.size() << " epochs (" << result.steps << " steps)";

  if (dev_data.size(task) > 0) {
    const auto preds = predict_dataset(*encoder, head, dev_data, task, variant,
                                       static_cast<std::size_t>(tc.max_len), prompt, workers);
    write_predictions(preds.records, dir / "dev_predictions.csv", columns_from(config, task));
    const GoldLabels golds = golds_of(dev_data, task);
    if (has_all_golds(golds, dev_data.size(task))) {
      const double acc = accuracy(preds.records, golds);
      save_run_result(make_run(config, encoder->name(), variant.tag(), Split::kDev, preds.records, acc),
                      dir / "dev_run.json");
      out << "; dev accuracy " << format_percent(acc) << " (best epoch " << result.best_epoch << ")";
    }
  }
  out << "\n";
}

void cmd_predict(const RunConfig& config, std::ostream& out, std::ostream& warn) {
  const fs::path model_dir = config.existing_path("model");
  const json model = read_json(model_dir / "model.json");
  Task task;
  TemplateId variant;
  TrainConfig tc;
  bool p2_quotes = false;
  try {
    task = parse_task(model.at("task").get<std::string>());
    variant = TemplateId::parse(task, model.at("template").get<std::string>());
    tc.max_len = model.at("train").at("max_len").get<int>();
    tc.head_dropout = model.at("train").at("head_dropout").get<double>();
    p2_quotes = model.value("p2_quotes", false);
  } catch (const json::exception& e) {
    throw ConfigError("config", "field 'model': malformed model.json: " + std::string(e.what()));
  }
  if (config.optional("task") && task_from(config) != task) {
    throw ConfigError("config", "field 'task': model was trained for task " + std::string(task_tag(task)));
  }
  if (config.optional("template") && !(template_from(config, task) == variant)) {
    throw ConfigError("config", "field 'template': model was trained with " + variant.tag());
  }
  const fs::path dir = out_dir_from(config);
  const int workers = workers_from(config);
  auto encoder = TransformerEncoder::load(model_dir / "encoder");
  const ChoiceHead head = ChoiceHead::load(model_dir / "head.bin", encoder->hidden_size(), tc.head_dropout);
  const Dataset data = load_dataset(config, task, "input", true);
  config.write_snapshot(dir / kSnapshotFile);

  PromptOptions prompt;
  prompt.p2_quotes = p2_quotes;
  const auto preds = predict_dataset(*encoder, head, data, task, variant,
                                     static_cast<std::size_t>(tc.max_len), prompt, workers);
  const ColumnMap columns = columns_from(config, task);
  write_predictions(preds.records, dir / "predictions.csv", columns);
  if (preds.fell_back > 0) {
    warn << "warning: " << preds.fell_back << " of " << preds.records.size()
         << " records had no resolvable true statement and were scored with template P\n";
  }
  out << "wrote " << preds.records.size() << " predictions to " << (dir / "predictions.csv").string();
  const GoldLabels golds = golds_of(data, task);
  if (has_all_golds(golds, data.size(task))) {
    const double acc = accuracy(preds.records, golds);
    save_run_result(make_run(config, model.value("encoder", encoder->name()), variant.tag(),
                             Split::kDev, preds.records, acc),
                    dir / "run_result.json");
    out << "; accuracy " << format_percent(acc);
  }
  out << "\n";
}

void cmd_evaluate(const RunConfig& config, std::ostream& out) {
  const Task task = task_from(config);
  const ColumnMap columns = columns_from(config, task);
  const auto predictions = load_answers(config.existing_path("data.predictions"), columns);
  const auto answers = load_answers(config.existing_path("data.answers"), columns);
  const fs::path dir = out_dir_from(config);
  config.write_snapshot(dir / kSnapshotFile);
  const GoldLabels golds = golds_from(std::span<const PredictionRecord>(answers));
  // A submission must cover the whole answer file, not just a subset of it.
  std::set<std::string> predicted;
  for (const auto& p : predictions) predicted.insert(p.id);
  std::vector<std::string> unanswered;
  for (const auto& a : answers) {
    if (!predicted.count(a.id)) unanswered.push_back(a.id);
  }
  if (!unanswered.empty()) {
    std::string msg = std::to_string(unanswered.size()) + " answer ids have no prediction:";
    for (std::size_t i = 0; i < unanswered.size() && i < 20; ++i) msg += " " + unanswered[i];
    throw ConsistencyError(kModule, msg);
  }
  const double acc = accuracy(predictions, golds);
  save_run_result(make_run(config, config.get("encoder", "unknown"),
                           config.get("template", "ORIG"), Split::kDev, predictions, acc),
                  dir / "run_result.json");
  out << "accuracy: " << format_percent(acc) << "\n";
}

void cmd_probe(const RunConfig& config, std::ostream& out) {
  const fs::path dir = out_dir_from(config);
  auto mlm = load_encoder(config, "model");
  const LengthNorm norm =
      with_field("probe.norm", [&] { return parse_length_norm(config.get("probe.norm", "none")); });
  const bool heatmaps = config.get_bool("probe.heatmaps", false);
  const int workers = workers_from(config);
  const auto answers = config.optional_existing_path("data.answers");
  const auto pairs = load_validation_set(config.existing_path("data.pairs"), answers,
                                         columns_from(config, Task::kValidation));
  config.write_snapshot(dir / kSnapshotFile);

  std::vector<ZeroShotResult> results(pairs.size());
  const int w = static_cast<int>(std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(pairs.size(), 1)));
  EncoderPool pool(*mlm, w);
  parallel_for(pairs.size(), w, [&](int worker, std::size_t i) {
    results[i] = zero_shot_validate(pool.get(worker), pairs[i], norm);
  });

  std::string lines;
  std::vector<PredictionRecord> preds;
  if (heatmaps) fs::create_directories(dir / "heatmaps");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& r = results[i];
    const auto gold = pairs[i].gold_against_index();
    std::optional<bool> correct;
    if (gold) correct = *gold == r.label;
    json j = {{"id", pairs[i].id},
              {"totals", {r.vectors[0].total, r.vectors[1].total}},
              {"label", r.label},
              {"norm", std::string(to_string(norm))},
              {"statements", {token_vector_json(r.vectors[0]), token_vector_json(r.vectors[1])}}};
    if (correct) j["correct"] = *correct;
    lines += j.dump() + "\n";
    preds.push_back({pairs[i].id, r.label});
    if (heatmaps) write_pair_heatmap(dir / "heatmaps", pairs[i].id, r.vectors, r.label, correct);
  }
  write_text(dir / "probe.jsonl", lines);
  write_predictions(preds, dir / "predictions.csv", columns_from(config, Task::kValidation));
  out << "probed " << pairs.size() << " pairs";
  const GoldLabels golds = golds_from(std::span<const StatementPair>(pairs));
  if (has_all_golds(golds, pairs.size())) {
    const double acc = accuracy(preds, golds);
    save_run_result(make_run(config, mlm->name(), "ZS", Split::kDev, preds, acc),
                    dir / "run_result.json");
    out << "; accuracy " << format_percent(acc);
  }
  out << "\n";
}

void cmd_visualize(const RunConfig& config, std::ostream& out) {
  const auto scores_path = config.existing_path("data.scores");
  const fs::path dir = out_dir_from(config);
  const auto ids = config.get_list("probe.ids");
  config.write_snapshot(dir / kSnapshotFile);
  std::ifstream in(scores_path);
  if (!in) throw IoError(kModule, "cannot read " + scores_path.string());
  fs::create_directories(dir / "heatmaps");
  std::string line;
  std::size_t lineno = 0, written = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
      const std::string id = j.at("id").get<std::string>();
      if (!ids.empty() && std::find(ids.begin(), ids.end(), id) == ids.end()) continue;
      const auto& st = j.at("statements");
      if (!st.is_array() || st.size() != 2) throw ParseError(kModule, "expected two score vectors");
      std::optional<bool> correct;
      if (j.contains("correct")) correct = j.at("correct").get<bool>();
      write_pair_heatmap(dir / "heatmaps", id, {token_vector_from(st[0]), token_vector_from(st[1])},
                         j.at("label").get<int>(), correct);
      ++written;
    } catch (const json::exception& e) {
      throw ParseError(kModule, scores_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  out << "wrote " << written << " heatmaps to " << (dir / "heatmaps").string() << "\n";
}

void cmd_report(const RunConfig& config, std::ostream& out) {
  const auto run_paths = config.get_list("report.runs");
  if (run_paths.empty()) throw ConfigError("config", "missing required field 'report.runs'");
  std::vector<RunResult> runs;
  for (const auto& p : run_paths) {
    if (!fs::exists(p)) throw ConfigError("config", "field 'report.runs': path does not exist: " + p);
    runs.push_back(load_run_result(p));
  }
  const auto case_ids = config.get_list("report.case_ids");
  std::optional<Task> task;
  if (!case_ids.empty()) task = task_from(config);
  const fs::path dir = out_dir_from(config);
  config.write_snapshot(dir / kSnapshotFile);

  const ReportTable table = compare_runs(runs);
  const std::string text = table.render_text();
  write_text(dir / "report.txt", text);
  write_text(dir / "report.json", table.to_json());
  out << text;

  if (task) {
    const Dataset data = load_dataset(config, *task, "input", true);
    std::string cases = "# runs:";
    for (const auto& r : runs) cases += " " + r.run_id;
    cases += "\n";
    for (const auto& id : case_ids) {
      std::optional<CaseStudyRow> row;
      for (const auto& p : data.pairs) {
        if (p.id == id) row = case_study(p, runs);
      }
      for (const auto& e : data.explanations) {
        if (e.id == id) row = case_study(e, runs);
      }
      if (!row) throw ConsistencyError(kModule, "case id '" + id + "' not found in data.input");
      cases += row->render() + "\n";
    }
    write_text(dir / "case_study.txt", cases);
    out << cases;
  }
}

}  // namespace

// ---------------------------------------------------------------------------

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfiguration: return kExitConfig;
    case ErrorKind::kDivergence: return kExitDivergence;
    case ErrorKind::kParse:
    case ErrorKind::kConsistency:
    case ErrorKind::kValue:
    case ErrorKind::kArgument:
    case ErrorKind::kResolution:
    case ErrorKind::kEncoding:
    case ErrorKind::kData:
    case ErrorKind::kIo: return kExitData;
  }
  return kExitFailure;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"prepare", "pretrain-omcs", "train", "predict",
                                                 "evaluate", "probe", "visualize", "report"};
  return names;
}

void execute(const std::string& command, const RunConfig& config, std::ostream& out,
             std::ostream& err) {
  config.get("command", command);
  if (command == "prepare") {
    cmd_prepare(config, out);
  } else if (command == "pretrain-omcs") {
    cmd_pretrain(config, out);
  } else if (command == "train") {
    cmd_train(config, out);
  } else if (command == "predict") {
    cmd_predict(config, out, err);
  } else if (command == "evaluate") {
    cmd_evaluate(config, out);
  } else if (command == "probe") {
    cmd_probe(config, out);
  } else if (command == "visualize") {
    cmd_visualize(config, out);
  } else if (command == "report") {
    cmd_report(config, out);
  } else {
    throw ConfigError("config", "field 'command': unknown command '" + command + "'");
  }
  // Rewritten at the end so keys resolved late are recorded too.
  config.write_snapshot(fs::path(config.require("out_dir")) / kSnapshotFile);
}

int run(const std::string& command, const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    execute(command, config, out, err);
    return kExitOk;
  } catch (const Error& e) {
    err << e.module() << ": " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << kModule << ": I/O error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << kModule << ": " << e.what() << "\n";
    return kExitFailure;
  }
}

Task task_from(const RunConfig& config) {
  return with_field("task", [&] { return parse_task(config.require("task")); });
}

TemplateId template_from(const RunConfig& config, Task task) {
  return with_field("template", [&] { return TemplateId::parse(task, config.get("template", "ORIG")); });
}

ColumnMap columns_from(const RunConfig& config, Task task) {
  ColumnMap map = task == Task::kValidation ? ColumnMap::validation_default()
                                            : ColumnMap::explanation_default();
  map.delimiter = delimiter_from(config);
  map.data_header = config.get_bool("columns.data_header", map.data_header);
  map.answers_header = config.get_bool("columns.answers_header", map.answers_header);
  map.id_column = config.get("columns.id", map.id_column);
  if (task == Task::kValidation) {
    map.statement_columns = list_or(config, "columns.statements", map.statement_columns);
    map.labels_mark_against = config.get_bool("columns.labels_mark_against", map.labels_mark_against);
    if (map.statement_columns.size() != 2) {
      throw ConfigError("config", "field 'columns.statements': expected two column names");
    }
  } else {
    map.false_column = config.get("columns.false", map.false_column);
    map.option_columns = list_or(config, "columns.options", map.option_columns);
    if (map.option_columns.size() != 3) {
      throw ConfigError("config", "field 'columns.options': expected three column names");
    }
  }
  map.label_names = list_or(config, "columns.labels", map.label_names);
  if (map.label_names.size() != (task == Task::kValidation ? 2u : 3u)) {
    throw ConfigError("config", "field 'columns.labels': wrong number of label names");
  }
  return map;
}

PromptOptions prompt_options_from(const RunConfig& config) {
  PromptOptions o;
  o.p2_quotes = config.get_bool("prompt.p2_quotes", o.p2_quotes);
  return o;
}

TrainConfig train_config_from(const RunConfig& config, Task task, TemplateId variant) {
  TrainConfig c = task == Task::kValidation ? TrainConfig::validation_defaults()
                                            : TrainConfig::explanation_defaults(variant.variant);
  c.batch_size = config.get_int("train.batch_size", c.batch_size);
  c.learning_rate = config.get_double("train.learning_rate", c.learning_rate);
  c.epochs = config.get_int("train.epochs", c.epochs);
  c.max_len = config.get_int("train.max_len", c.max_len);
  c.seed = config.get_u64("train.seed", seed_from(config));
  c.grad_clip = optional_clip(config, "train.grad_clip", c.grad_clip);
  c.warmup_fraction = config.get_double("train.warmup_fraction", c.warmup_fraction);
  c.weight_decay = config.get_double("train.weight_decay", c.weight_decay);
  c.adam_eps = config.get_double("train.adam_eps", c.adam_eps);
  c.head_dropout = config.get_double("train.head_dropout", c.head_dropout);
  const std::string opt = config.get("train.optimizer", "adam");
  if (opt != "adam") throw ConfigError("config", "field 'train.optimizer': only 'adam' is supported");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("config", std::string("section 'train': ") + e.what());
  }
  return c;
}

PretrainConfig pretrain_config_from(const RunConfig& config) {
  PretrainConfig c;
  c.batch_size = config.get_int("pretrain.batch_size", c.batch_size);
  c.learning_rate = config.get_double("pretrain.learning_rate", c.learning_rate);
  c.epochs = config.get_int("pretrain.epochs", c.epochs);
  c.max_len = config.get_int("pretrain.max_len", c.max_len);
  c.seed = config.get_u64("pretrain.seed", seed_from(config));
  c.warmup_fraction = config.get_double("pretrain.warmup_fraction", c.warmup_fraction);
  c.weight_decay = config.get_double("pretrain.weight_decay", c.weight_decay);
  c.grad_clip = optional_clip(config, "pretrain.grad_clip", c.grad_clip);
  const int eval = config.get_int("pretrain.eval_sentences", static_cast<int>(c.eval_sentences));
  if (eval < 0) throw ConfigError("config", "field 'pretrain.eval_sentences': must be non-negative");
  c.eval_sentences = static_cast<std::size_t>(eval);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("config", std::string("section 'pretrain': ") + e.what());
  }
  return c;
}

MaskingConfig masking_config_from(const RunConfig& config) {
  MaskingConfig c;
  c.mask_rate = config.get_double("mask.rate", c.mask_rate);
  c.replace_mask_frac = config.get_double("mask.replace_mask_frac", c.replace_mask_frac);
  c.replace_random_frac = config.get_double("mask.replace_random_frac", c.replace_random_frac);
  c.keep_frac = config.get_double("mask.keep_frac", c.keep_frac);
  c.seed = config.get_u64("mask.seed", seed_from(config));
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("config", std::string("section 'mask': ") + e.what());
  }
  return c;
}

TransformerConfig transformer_config_from(const RunConfig& config) {
  TransformerConfig c;
  c.name = config.get("model.name", c.name);
  c.hidden_size = config.get_int("model.hidden_size", c.hidden_size);
  c.num_layers = config.get_int("model.num_layers", c.num_layers);
  c.num_heads = config.get_int("model.num_heads", c.num_heads);
  c.ffn_size = config.get_int("model.ffn_size", c.ffn_size);
  c.max_positions = config.get_int("model.max_positions", c.max_positions);
  c.type_vocab_size = config.get_int("model.type_vocab_size", c.type_vocab_size);
  c.dropout = config.get_double("model.dropout", c.dropout);
  c.layer_norm_eps = config.get_double("model.layer_norm_eps", c.layer_norm_eps);
  c.init_std = config.get_double("model.init_std", c.init_std);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("config", std::string("section 'model': ") + e.what());
  }
  return c;
}

VocabOptions vocab_options_from(const RunConfig& config) {
  VocabOptions o;
  const int max_words = config.get_int("vocab.max_words", static_cast<int>(o.max_words));
  const int min_count = config.get_int("vocab.min_count", static_cast<int>(o.min_count));
  if (max_words < 0 || min_count < 1) {
    throw ConfigError("config", "section 'vocab': max_words must be >= 0 and min_count >= 1");
  }
  o.max_words = static_cast<std::size_t>(max_words);
  o.min_count = static_cast<std::size_t>(min_count);
  o.lower_case = config.get_bool("vocab.lower_case", o.lower_case);
  return o;
}

std::string file_stem_for(std::string_view id) {
  std::string s;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_';
    s += ok ? c : '_';
  }
  return s.empty() ? "_" : s;
}

}  // namespace comve::cli
