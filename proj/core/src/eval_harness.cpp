#include "comve/eval_harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include <json.hpp>

#include "comve/error.hpp"

namespace comve {
namespace {

constexpr const char* kModule = "eval_harness";
constexpr const char* kCheck = "\xE2\x9C\x93";  // U+2713
constexpr const char* kCross = "\xE2\x9C\x97";  // U+2717

int template_rank(const std::string& tag) {
  static const std::array<std::string_view, 5> order = {"ORIG", "P1", "P2", "P", "P+C"};
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] == tag) return static_cast<int>(i);
  }
  return static_cast<int>(order.size());
}

const PredictionRecord* find_prediction(const RunResult& run, const std::string& id) {
  for (const auto& p : run.predictions) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

CaseStudyRow verdicts_for(const std::string& id, int gold, bool letters,
                          std::span<const RunResult> runs) {
  CaseStudyRow row;
  row.example_id = id;
  for (const auto& run : runs) {
    const PredictionRecord* p = find_prediction(run, id);
    if (!p) throw ConsistencyError(kModule, "run " + run.run_id + " has no prediction for " + id);
    Verdict v{run.run_id, p->predicted_label == gold, p->predicted_label, std::nullopt};
    if (letters) v.option_letter = static_cast<char>('A' + p->predicted_label - 1);
    row.verdicts.push_back(v);
  }
  return row;
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrial: return "trial";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "trial") return Split::kTrial;
  if (text == "dev") return Split::kDev;
  if (text == "test") return Split::kTest;
  throw ArgumentError(kModule, "unknown split '" + std::string(text) + "'");
}

GoldLabels golds_from(std::span<const StatementPair> pairs) {
  GoldLabels g;
  for (const auto& p : pairs) {
    if (auto a = p.gold_against_index()) g.emplace(p.id, *a);
  }
  return g;
}

GoldLabels golds_from(std::span<const ExplanationExample> examples) {
  GoldLabels g;
  for (const auto& e : examples) {
    if (e.gold_option_index) g.emplace(e.id, *e.gold_option_index);
  }
  return g;
}

GoldLabels golds_from(std::span<const PredictionRecord> answers) {
  GoldLabels g;
  for (const auto& a : answers) g.emplace(a.id, a.predicted_label);
  return g;
}

double accuracy(std::span<const PredictionRecord> predictions, const GoldLabels& golds) {
  if (predictions.empty()) throw ValueError(kModule, "accuracy of an empty prediction list");
  std::vector<std::string> missing;
  std::size_t correct = 0;
  for (const auto& p : predictions) {
    auto it = golds.find(p.id);
    if (it == golds.end()) {
      missing.push_back(p.id);
    } else if (it->second == p.predicted_label) {
      ++correct;
    }
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " prediction ids have no gold label:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    throw ConsistencyError(kModule, msg);
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

std::string format_percent(double fraction) {
  const double tenths = fraction * 1000.0;
  const double lower = std::floor(tenths);
  const double frac = tenths - lower;
  double rounded;
  if (std::abs(frac - 0.5) < 1e-9) {
    rounded = std::fmod(lower, 2.0) == 0.0 ? lower : lower + 1.0;
  } else {
    rounded = std::round(tenths);
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", rounded / 10.0);
  return buf;
}

ReportTable compare_runs(std::span<const RunResult> results) {
  if (results.empty()) throw ValueError(kModule, "no runs to compare");
  std::set<std::tuple<std::string, std::string, Split>> seen;
  std::set<Split> present;
  for (const auto& r : results) {
    if (!seen.emplace(r.encoder_tag, r.template_tag, r.split).second) {
      throw ConsistencyError(kModule, "duplicate run for " + r.encoder_tag + "+" + r.template_tag +
                                          " on " + std::string(to_string(r.split)));
    }
    present.insert(r.split);
  }
  ReportTable table;
  for (Split s : kAllSplits) {
    if (present.count(s)) table.splits.push_back(s);
  }

  using Key = std::tuple<std::string, int, std::string>;
  std::map<Key, ReportRow> rows;
  for (const auto& r : results) {
    const Key key{r.encoder_tag, template_rank(r.template_tag), r.template_tag};
    auto [it, inserted] = rows.try_emplace(key);
    if (inserted) {
      it->second.encoder = r.encoder_tag;
      it->second.template_tag = r.template_tag;
      it->second.cells.assign(table.splits.size(), std::nullopt);
    }
    const auto col = std::find(table.splits.begin(), table.splits.end(), r.split) - table.splits.begin();
    it->second.cells[static_cast<std::size_t>(col)] = r.accuracy;
  }
  for (auto& [key, row] : rows) table.rows.push_back(std::move(row));
  return table;
}

std::string ReportTable::render_text() const {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header = {"Model"};
  for (Split s : splits) {
    std::string name(to_string(s));
    name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
    header.push_back(name);
  }
  grid.push_back(header);
  for (const auto& row : rows) {
    std::vector<std::string> line = {row.encoder + "+" + row.template_tag};
    for (const auto& cell : row.cells) line.push_back(cell ? format_percent(*cell) : "");
    grid.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : grid) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::string out;
  for (const auto& line : grid) {
    std::string text;
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c > 0) text += "  ";
      if (c == 0) {
        text += line[c] + std::string(width[c] - line[c].size(), ' ');
      } else {
        text += std::string(width[c] - line[c].size(), ' ') + line[c];
      }
    }
    while (!text.empty() && text.back() == ' ') text.pop_back();
    out += text + "\n";
  }
  return out;
}

std::string ReportTable::to_json() const {
  nlohmann::ordered_json j;
  j["splits"] = nlohmann::ordered_json::array();
  for (Split s : splits) j["splits"].push_back(std::string(to_string(s)));
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    nlohmann::ordered_json r = {{"encoder", row.encoder}, {"template", row.template_tag}};
    for (std::size_t c = 0; c < splits.size(); ++c) {
      const std::string key(to_string(splits[c]));
      if (row.cells[c]) {
        r[key] = {{"accuracy", *row.cells[c]}, {"percent", format_percent(*row.cells[c])}};
      } else {
        r[key] = nullptr;
      }
    }
    j["rows"].push_back(std::move(r));
  }
  return j.dump(2) + "\n";
}

std::string CaseStudyRow::glyphs() const {
  std::string out;
  for (const auto& v : verdicts) out += v.correct ? kCheck : kCross;
  return out;
}

std::string CaseStudyRow::render() const {
  std::string out = example_id + ":";
  for (const auto& v : verdicts) {
    out += " ";
    out += v.correct ? kCheck : kCross;
    if (!v.correct && v.option_letter) out += std::string(" (") + *v.option_letter + ")";
  }
  return out;
}

CaseStudyRow case_study(const StatementPair& example, std::span<const RunResult> runs) {
  const auto gold = example.gold_against_index();
  if (!gold) throw DataError(kModule, "example " + example.id + " has no gold label");
  return verdicts_for(example.id, *gold, false, runs);
}

CaseStudyRow case_study(const ExplanationExample& example, std::span<const RunResult> runs) {
  if (!example.gold_option_index) throw DataError(kModule, "example " + example.id + " has no gold label");
  return verdicts_for(example.id, *example.gold_option_index, true, runs);
}

void save_run_result(const RunResult& r, const std::filesystem::path& path) {
  nlohmann::ordered_json j = {
      {"run_id", r.run_id},   {"encoder_tag", r.encoder_tag},
      {"template_tag", r.template_tag}, {"split", std::string(to_string(r.split))},
      {"accuracy", r.accuracy}, {"predictions", nlohmann::ordered_json::array()},
  };
  for (const auto& p : r.predictions) {
    j["predictions"].push_back({{"id", p.id}, {"label", p.predicted_label}});
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(kModule, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

RunResult load_run_result(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(kModule, "cannot open " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    RunResult r;
    r.run_id = j.at("run_id").get<std::string>();
    r.encoder_tag = j.at("encoder_tag").get<std::string>();
    r.template_tag = j.at("template_tag").get<std::string>();
    r.split = parse_split(j.at("split").get<std::string>());
    r.accuracy = j.at("accuracy").get<double>();
    for (const auto& p : j.at("predictions")) {
      r.predictions.push_back({p.at("id").get<std::string>(), p.at("label").get<int>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(kModule, path.string() + ": " + e.what());
  }
}

}  // namespace comve
