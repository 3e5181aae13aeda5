#include "comve/prompt_builder.hpp"

#include <algorithm>
#include <cctype>

#include "comve/corpus_io.hpp"
#include "comve/error.hpp"

namespace comve {
namespace {

constexpr const char* kModule = "prompt_builder";

class InputBuilder {
 public:
  InputBuilder& marker(Marker m) {
    input_.marker_layout.push_back({m, input_.segments.size()});
    return *this;
  }
  InputBuilder& text(std::string_view t, SegmentRole role) {
    input_.segments.push_back({std::string(t), role});
    return *this;
  }
  SegmentedInput build() && { return std::move(input_); }

 private:
  SegmentedInput input_;
};

std::string checked(std::string_view text, const char* what) {
  std::string t = trim(text);
  if (t.empty()) throw ArgumentError(kModule, std::string("empty ") + what);
  return t;
}

}  // namespace

bool TemplateId::valid() const {
  if (task == Task::kValidation) {
    return variant == Variant::kOrig || variant == Variant::kP1 || variant == Variant::kP2;
  }
  return variant == Variant::kOrig || variant == Variant::kP || variant == Variant::kPPlusC;
}

std::string TemplateId::tag() const {
  switch (variant) {
    case Variant::kOrig: return "ORIG";
    case Variant::kP1: return "P1";
    case Variant::kP2: return "P2";
    case Variant::kP: return "P";
    case Variant::kPPlusC: return "P+C";
  }
  return "?";
}

TemplateId TemplateId::parse(Task task, std::string_view tag) {
  std::string upper(tag);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  TemplateId id{task, Variant::kOrig};
  if (upper == "ORIG" || upper == "ORIG.") {
    id.variant = Variant::kOrig;
  } else if (upper == "P1") {
    id.variant = Variant::kP1;
  } else if (upper == "P2") {
    id.variant = Variant::kP2;
  } else if (upper == "P") {
    id.variant = Variant::kP;
  } else if (upper == "P+C" || upper == "P_PLUS_C" || upper == "PC") {
    id.variant = Variant::kPPlusC;
  } else {
    throw ArgumentError(kModule, "unknown template '" + std::string(tag) + "'");
  }
  if (!id.valid()) {
    throw ArgumentError(kModule, "template " + id.tag() + " is not defined for task " +
                                     std::string(task_tag(task)));
  }
  return id;
}

std::string_view task_tag(Task task) { return task == Task::kValidation ? "A" : "B"; }

Task parse_task(std::string_view tag) {
  if (tag == "A" || tag == "a" || tag == "validation") return Task::kValidation;
  if (tag == "B" || tag == "b" || tag == "explanation") return Task::kExplanation;
  throw ArgumentError(kModule, "unknown task '" + std::string(tag) + "' (expected A or B)");
}

std::size_t SegmentedInput::count(Marker marker) const {
  return static_cast<std::size_t>(std::count_if(
      marker_layout.begin(), marker_layout.end(),
      [marker](const MarkerSlot& slot) { return slot.marker == marker; }));
}

SegmentedInput build_validation_input(TemplateId variant, std::string_view statement,
                                      const PromptOptions& options) {
  if (variant.task != Task::kValidation || !variant.valid()) {
    throw ArgumentError(kModule, "template " + variant.tag() + " is not a validation template");
  }
  const std::string s = checked(statement, "statement");
  InputBuilder b;
  b.marker(Marker::kCls);
  switch (variant.variant) {
    case Variant::kOrig:
      b.text(s, SegmentRole::kStatement);
      break;
    case Variant::kP1:
      b.text(prompt_text::kQaPrompt, SegmentRole::kPrompt)
          .marker(Marker::kSep)
          .text(s, SegmentRole::kStatement);
      break;
    case Variant::kP2:
      if (options.p2_quotes) {
        b.text(std::string(prompt_text::kQuestionPrefix) + " \"", SegmentRole::kPrompt)
            .text(s, SegmentRole::kStatement)
            .text("\" " + std::string(prompt_text::kQuestionSuffix), SegmentRole::kPrompt);
      } else {
        b.text(prompt_text::kQuestionPrefix, SegmentRole::kPrompt)
            .text(s, SegmentRole::kStatement)
            .text(prompt_text::kQuestionSuffix, SegmentRole::kPrompt);
      }
      break;
    default:
      break;
  }
  b.marker(Marker::kSep);
  return std::move(b).build();
}

SegmentedInput build_explanation_input(TemplateId variant, std::string_view false_statement,
                                       std::string_view option,
                                       const std::optional<std::string>& true_statement) {
  if (variant.task != Task::kExplanation || !variant.valid()) {
    throw ArgumentError(kModule, "template " + variant.tag() + " is not an explanation template");
  }
  const std::string f = checked(false_statement, "false statement");
  const std::string o = checked(option, "option");
  InputBuilder b;
  b.marker(Marker::kCls);
  switch (variant.variant) {
    case Variant::kOrig:
      b.text(f, SegmentRole::kStatement).marker(Marker::kSep).text(o, SegmentRole::kOption);
      break;
    case Variant::kP:
      b.text(f, SegmentRole::kStatement)
          .text(prompt_text::kBecauseConnective, SegmentRole::kPrompt)
          .text(o, SegmentRole::kOption);
      break;
    case Variant::kPPlusC: {
      if (!true_statement || trim(*true_statement).empty()) {
        throw ArgumentError(kModule, "template P+C requires the true statement");
      }
      b.text(prompt_text::kContextPrefix, SegmentRole::kPrompt)
          .text(trim(*true_statement), SegmentRole::kContext)
          .text(prompt_text::kContextSuffix, SegmentRole::kPrompt)
          .marker(Marker::kSep)
          .text(f, SegmentRole::kStatement)
          .text(prompt_text::kBecauseConnective, SegmentRole::kPrompt)
          .text(o, SegmentRole::kOption);
      break;
    }
    default:
      break;
  }
  b.marker(Marker::kSep);
  return std::move(b).build();
}

std::string render(const SegmentedInput& input, const MarkerNames& names) {
  std::string out;
  auto append = [&out](std::string_view piece) {
    if (piece.empty()) return;
    if (!out.empty()) out.push_back(' ');
    out.append(piece);
  };
  auto slot = input.marker_layout.begin();
  const auto emit_markers_at = [&](std::size_t position) {
    while (slot != input.marker_layout.end() && slot->position == position) {
      append(slot->marker == Marker::kCls ? names.cls : names.sep);
      ++slot;
    }
  };
  for (std::size_t i = 0; i < input.segments.size(); ++i) {
    emit_markers_at(i);
    append(input.segments[i].text);
  }
  emit_markers_at(input.segments.size());
  return out;
}

}  // namespace comve
