#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace comve {

namespace prompt_text {
inline constexpr std::string_view kQaPrompt = "If the following statement is in common sense?";
inline constexpr std::string_view kBecauseConnective = "is against common sense because";
inline constexpr std::string_view kContextPrefix = "If";
inline constexpr std::string_view kContextSuffix = "is in common sense.";
// Placeholder form of the validation question with the statement in the slot.
inline constexpr std::string_view kQuestionPrefix = "If";
inline constexpr std::string_view kQuestionSuffix = "is in common sense?";
}  // namespace prompt_text

enum class Task { kValidation, kExplanation };

enum class Variant { kOrig, kP1, kP2, kP, kPPlusC };

struct TemplateId {
  Task task = Task::kValidation;
  Variant variant = Variant::kOrig;

  bool valid() const;
  // CLI vocabulary: ORIG, P1, P2, P, P+C.
  std::string tag() const;
  static TemplateId parse(Task task, std::string_view tag);  // throws ArgumentError

  friend bool operator==(const TemplateId&, const TemplateId&) = default;
};

std::string_view task_tag(Task task);     // "A" or "B"
Task parse_task(std::string_view tag);    // throws ArgumentError

enum class SegmentRole { kPrompt, kStatement, kOption, kContext };

struct Segment {
  std::string text;
  SegmentRole role = SegmentRole::kPrompt;

  friend bool operator==(const Segment&, const Segment&) = default;
};

enum class Marker { kCls, kSep };

// A boundary marker placed before segment `position`; position equal to the
// segment count means after the last segment.
struct MarkerSlot {
  Marker marker = Marker::kCls;
  std::size_t position = 0;

  friend bool operator==(const MarkerSlot&, const MarkerSlot&) = default;
};

struct SegmentedInput {
  std::vector<Segment> segments;
  std::vector<MarkerSlot> marker_layout;  // sorted by position

  std::size_t count(Marker marker) const;
  friend bool operator==(const SegmentedInput&, const SegmentedInput&) = default;
};

struct PromptOptions {
  // Wrap the statement of the validation placeholder template in quotes.
  bool p2_quotes = false;
};

SegmentedInput build_validation_input(TemplateId variant, std::string_view statement,
                                      const PromptOptions& options = {});

SegmentedInput build_explanation_input(TemplateId variant, std::string_view false_statement,
                                       std::string_view option,
                                       const std::optional<std::string>& true_statement = {});

struct MarkerNames {
  std::string cls = "[CLS]";
  std::string sep = "[SEP]";
};

// Single-space join of markers and segments; empty marker names are skipped.
std::string render(const SegmentedInput& input, const MarkerNames& names = {});

}  // namespace comve
