#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cli/commands.hpp"

namespace {

using comve::cli::RunConfig;

struct FlagSpec {
  const char* flag;
  const char* key;
  const char* help;
};

// Flags shared by every subcommand; each maps onto one configuration key.
constexpr FlagSpec kCommonFlags[] = {
    {"--out-dir,--out", "out_dir", "Directory receiving every artifact of the run"},
    {"--task", "task", "Subtask: A (validation) or B (explanation)"},
    {"--template", "template", "Template variant: ORIG, P1, P2, P or P+C"},
    {"--encoder", "encoder", "Encoder checkpoint directory or cached name"},
    {"--model", "model", "Trained model directory, or masked LM checkpoint for probe"},
    {"--seed", "seed", "Global seed"},
    {"--workers", "workers", "Worker threads for read-only stages"},
    {"--train", "data.train", "Training data file"},
    {"--train-answers", "data.train_answers", "Training answers file"},
    {"--train-pairs", "data.train_pairs", "Statement pairs matching the training records"},
    {"--dev", "data.dev", "Development data file"},
    {"--dev-answers", "data.dev_answers", "Development answers file"},
    {"--dev-pairs", "data.dev_pairs", "Statement pairs matching the development records"},
    {"--data,--input", "data.input", "Data file to predict on or report about"},
    {"--answers", "data.answers", "Answers for --input, --pairs or --predictions"},
    {"--pairs", "data.pairs", "Statement pairs file (probe input, or context for P+C)"},
    {"--predictions", "data.predictions", "Predictions file to evaluate"},
    {"--corpus", "data.corpus", "Plain-text corpus, one sentence per line"},
    {"--scores", "data.scores", "Probe output (JSON lines) to visualise"},
    {"--norm", "probe.norm", "Length normalisation: none or per_token"},
    {"--runs", "report.runs", "Comma-separated run result files"},
    {"--case-ids", "report.case_ids", "Comma-separated ids for the case study"},
};

const std::map<std::string, std::string> kDescriptions = {
    {"prepare", "Build a vocabulary and initialise an encoder checkpoint"},
    {"pretrain-omcs", "Continue masked-LM pretraining on a sentence corpus"},
    {"train", "Fine-tune a multiple-choice model"},
    {"predict", "Write predictions for a data file"},
    {"evaluate", "Score a predictions file against answers"},
    {"probe", "Zero-shot scoring of statement pairs with a masked LM"},
    {"visualize", "Render token heatmaps from probe output"},
    {"report", "Compare runs and render a case study"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Commonsense validation and explanation toolkit"};
  app.require_subcommand(0, 1);
  std::string config_file;
  std::vector<std::string> assignments;
  app.add_option("--config", config_file, "Configuration file (key = value, [section] prefixes)")
      ->check(CLI::ExistingFile);
  app.add_option("--set", assignments, "Override one configuration key (key=value)");

  std::map<std::string, std::string> flag_values;
  std::map<std::string, bool> switches;
  for (const auto& name : comve::cli::command_names()) {
    auto* sub = app.add_subcommand(name, kDescriptions.at(name));
    sub->fallthrough();
    for (const auto& spec : kCommonFlags) {
      sub->add_option_function<std::string>(
          spec.flag, [&flag_values, key = std::string(spec.key)](const std::string& v) {
            flag_values[key] = v;
          },
          spec.help);
    }
    if (name == "train" || name == "pretrain-omcs") {
      const std::string key = name == "train" ? "train.epochs" : "pretrain.epochs";
      sub->add_option_function<std::string>(
          "--epochs", [&flag_values, key](const std::string& v) { flag_values[key] = v; },
          "Number of epochs");
    }
    if (name == "probe") {
      sub->add_flag_function("--heatmaps", [&switches](std::int64_t) { switches["probe.heatmaps"] = true; },
                             "Also write one heatmap file per pair");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : comve::cli::kExitConfig;
  }

  RunConfig config;
  try {
    if (!config_file.empty()) config = RunConfig::from_file(config_file);
    for (const auto& [k, v] : flag_values) config.set(k, v);
    for (const auto& [k, v] : switches) config.set(k, v ? "true" : "false");
    for (const auto& a : assignments) config.set_assignment(a);
  } catch (const comve::Error& e) {
    std::cerr << e.module() << ": " << comve::to_string(e.kind()) << ": " << e.what() << "\n";
    return comve::cli::kExitConfig;
  }

  std::string command;
  for (const auto* sub : app.get_subcommands()) command = sub->get_name();
  if (command.empty()) {
    // A config snapshot names its command, so it can be replayed on its own.
    auto recorded = config.optional("command");
    if (!recorded) {
      std::cerr << app.help();
      return comve::cli::kExitConfig;
    }
    command = *recorded;
  }
  return comve::cli::run(command, config, std::cout, std::cerr);
}
