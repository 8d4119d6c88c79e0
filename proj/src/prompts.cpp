#include "narrshift/prompts.hpp"

#include <algorithm>
#include <cctype>

#include "narrshift/logic.hpp"

namespace narrshift {
namespace {

constexpr std::string_view kTextOpen = "** start of text **\n";
constexpr std::string_view kTextClose = "\n** end of text **";
constexpr std::string_view kItem = "Survey item ";

constexpr std::string_view kStoryOpen = "** start of story **\n";
constexpr std::string_view kStoryClose = "\n** end of story **";
constexpr std::string_view kGoal = "Your goal is to make the story more ";
constexpr std::string_view kSegment = "Selected segment: ** ";
constexpr std::string_view kSegmentClose = " **\n";
constexpr std::string_view kSteer = "While rewriting the selected segment, strengthen the feature ";
constexpr std::string_view kBaseline = "Make the following story more ";

std::optional<std::string_view> between(std::string_view s, std::string_view open,
                                        std::string_view close, std::size_t from = 0) {
  const auto a = s.find(open, from);
  if (a == std::string_view::npos) return std::nullopt;
  const auto start = a + open.size();
  const auto b = s.find(close, start);
  if (b == std::string_view::npos) return std::nullopt;
  return s.substr(start, b - start);
}

std::optional<int> feature_after(std::string_view s, std::size_t pos) {
  if (pos >= s.size() || s[pos] != 'f') return std::nullopt;
  std::size_t end = pos + 1;
  while (end < s.size() && std::isdigit(static_cast<unsigned char>(s[end]))) ++end;
  return parse_feature_constant(s.substr(pos, end - pos));
}

}  // namespace

std::string render_survey_prompt(std::string_view text, const Feature& feature) {
  std::string p;
  p += "You are answering one item of a narrative diagnostic survey about the text below.\n\n";
  p += kTextOpen;
  p += text;
  p += kTextClose;
  p += "\n\n";
  p += kItem;
  p += feature.id() + " (" + feature.name + "): " + feature.question + "\n\n";
  p += "Answer with a single integer 1-5, where 1 means \"not at all\" and 5 means "
       "\"completely\". Output only the number.";
  return p;
}

std::optional<SurveyPrompt> parse_survey_prompt(std::string_view prompt) {
  const auto text = between(prompt, kTextOpen, kTextClose);
  if (!text) return std::nullopt;
  const auto item = prompt.find(kItem, static_cast<std::size_t>(text->data() - prompt.data()) + text->size());
  if (item == std::string_view::npos) return std::nullopt;
  const auto feature = feature_after(prompt, item + kItem.size());
  if (!feature) return std::nullopt;
  return SurveyPrompt{std::string(*text), *feature};
}

std::optional<int> parse_rating_reply(std::string_view reply) {
  std::size_t i = 0;
  while (i < reply.size()) {
    if (!std::isdigit(static_cast<unsigned char>(reply[i]))) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < reply.size() && std::isdigit(static_cast<unsigned char>(reply[end]))) ++end;
    // A digit glued to a letter ("f4") is not a rating token.
    const bool glued = (i > 0 && std::isalpha(static_cast<unsigned char>(reply[i - 1]))) ||
                       (end < reply.size() && std::isalpha(static_cast<unsigned char>(reply[end])));
    if (!glued) {
      if (end - i != 1) return std::nullopt;
      const int value = reply[i] - '0';
      if (value < 1 || value > 5) return std::nullopt;
      return value;
    }
    i = end;
  }
  return std::nullopt;
}

std::string_view to_string(PromptMode mode) {
  return mode == PromptMode::steered ? "steered" : "verbatim";
}

std::optional<PromptMode> parse_prompt_mode(std::string_view text) {
  if (text == "steered") return PromptMode::steered;
  if (text == "verbatim") return PromptMode::verbatim;
  return std::nullopt;
}

std::string render_transform_prompt(std::string_view story, std::string_view segment,
                                    Narrative target, const Feature* feature, PromptMode mode) {
  const std::string source(to_string(opposite(target)));
  const std::string goal(to_string(target));
  std::string p;
  p += "You are given a " + source + " story below.\n\n";
  p += kStoryOpen;
  p += story;
  p += kStoryClose;
  p += "\n\n";
  p += std::string(kGoal) + goal + ". To make it more " + goal +
       ", you will update only the selected segment from the story which is provided below.\n\n";
  p += kSegment;
  p += segment;
  p += kSegmentClose;
  p += "\n";
  if (mode == PromptMode::steered && feature != nullptr) {
    p += std::string(kSteer) + "\"" + feature->name + "\" (" + feature->id() +
         "): " + feature->question + "\n\n";
  }
  p += "Now, rewrite the whole story by updating only the selected segment to make the story "
       "more " + goal + ". Don't change other parts of the story, and just output the rewritten "
       "story, nothing else.";
  return p;
}

std::optional<TransformPrompt> parse_transform_prompt(std::string_view prompt) {
  const auto story = between(prompt, kStoryOpen, kStoryClose);
  if (!story) return std::nullopt;
  const std::size_t after_story = static_cast<std::size_t>(story->data() - prompt.data()) + story->size();
  const auto goal = between(prompt, kGoal, ".", after_story);
  if (!goal) return std::nullopt;
  const auto target = parse_narrative(*goal);
  if (!target) return std::nullopt;
  const auto seg_at = prompt.find(kSegment, after_story);
  if (seg_at == std::string_view::npos) return std::nullopt;
  const auto seg_start = seg_at + kSegment.size();
  const auto steer_at = prompt.find(kSteer, seg_start);
  const auto now_at = prompt.find("\nNow, rewrite the whole story", seg_start);
  const auto tail = std::min(steer_at, now_at);
  const auto seg_end = prompt.rfind(kSegmentClose, tail);
  if (seg_end == std::string_view::npos || seg_end < seg_start) return std::nullopt;

  TransformPrompt out;
  out.story = std::string(*story);
  out.segment = std::string(prompt.substr(seg_start, seg_end - seg_start));
  out.target = *target;
  if (steer_at != std::string_view::npos) {
    const auto open = prompt.find("\" (", steer_at);
    if (open != std::string_view::npos) out.feature = feature_after(prompt, open + 3);
  }
  return out;
}

std::string baseline_instruction(Narrative target) {
  return std::string(kBaseline) + std::string(to_string(target));
}

std::optional<Narrative> parse_baseline_instruction(std::string_view instruction) {
  if (instruction.substr(0, kBaseline.size()) != kBaseline) return std::nullopt;
  auto rest = instruction.substr(kBaseline.size());
  while (!rest.empty() && (rest.back() == '.' || rest.back() == ':' || rest.back() == '\n')) {
    rest.remove_suffix(1);
  }
  return parse_narrative(rest);
}

}  // namespace narrshift
