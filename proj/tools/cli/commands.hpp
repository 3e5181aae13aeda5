#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "cli/run_config.hpp"
#include "comve/choice_model.hpp"
#include "comve/corpus_io.hpp"
#include "comve/encoder.hpp"
#include "comve/error.hpp"
#include "comve/omcs_pretrainer.hpp"
#include "comve/prompt_builder.hpp"
#include "comve/tokenizer.hpp"

namespace comve::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDivergence = 4;

inline constexpr const char* kSnapshotFile = "run.cfg";

int exit_code_for(ErrorKind kind);
const std::vector<std::string>& command_names();

// Runs one command and maps failures to exit codes; errors are reported on
// `err` as "<module>: <kind>: <cause>".
int run(const std::string& command, const RunConfig& config, std::ostream& out, std::ostream& err);

// As `run`, but lets library errors escape. Warnings go to `err`.
void execute(const std::string& command, const RunConfig& config, std::ostream& out,
             std::ostream& err);

// Typed views over the flat configuration. Malformed values raise
// ConfigError naming the offending field.
Task task_from(const RunConfig& config);
TemplateId template_from(const RunConfig& config, Task task);
ColumnMap columns_from(const RunConfig& config, Task task);
PromptOptions prompt_options_from(const RunConfig& config);
TrainConfig train_config_from(const RunConfig& config, Task task, TemplateId variant);
PretrainConfig pretrain_config_from(const RunConfig& config);
MaskingConfig masking_config_from(const RunConfig& config);
TransformerConfig transformer_config_from(const RunConfig& config);
VocabOptions vocab_options_from(const RunConfig& config);

// Id made safe for use as a file name.
std::string file_stem_for(std::string_view id);

}  // namespace comve::cli
