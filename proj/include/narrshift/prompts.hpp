#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "narrshift/catalog.hpp"
#include "narrshift/narrative.hpp"

namespace narrshift {

// One survey question per request; the reply must be a single integer 1-5.
std::string render_survey_prompt(std::string_view text, const Feature& feature);

struct SurveyPrompt {
  std::string text;
  int feature = 0;
};
std::optional<SurveyPrompt> parse_survey_prompt(std::string_view prompt);

// First integer token of a reply, if it lies in 1..5.
std::optional<int> parse_rating_reply(std::string_view reply);

enum class PromptMode { steered, verbatim };
std::string_view to_string(PromptMode mode);
std::optional<PromptMode> parse_prompt_mode(std::string_view text);

// Segment rewrite prompt with [source_type], [target_type], [story] and
// [segment] filled in. Steered mode adds one sentence naming the abduced
// feature and its survey question.
std::string render_transform_prompt(std::string_view story, std::string_view segment,
                                    Narrative target, const Feature* feature, PromptMode mode);

struct TransformPrompt {
  std::string story;
  std::string segment;
  Narrative target = Narrative::individualistic;
  std::optional<int> feature;
};
std::optional<TransformPrompt> parse_transform_prompt(std::string_view prompt);

// Zero-shot baseline instruction; the story travels as the user message.
std::string baseline_instruction(Narrative target);
std::optional<Narrative> parse_baseline_instruction(std::string_view instruction);

}  // namespace narrshift
