#include "narrshift/mock_provider.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <set>

#include "narrshift/prompts.hpp"
#include "narrshift/text.hpp"

namespace narrshift {
namespace {

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

int dual_of(int feature) { return feature <= 20 ? feature + 20 : feature - 20; }

bool is_ascii_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

std::set<std::string> token_set(std::string_view text) {
  auto tokens = tokenize(text);
  return {tokens.begin(), tokens.end()};
}

const std::vector<std::string> kPrefixes = {
    "Indeed, ", "In those days, ", "As it happened, ", "Quietly, ", "Once more, ", "By then, ",
};

}  // namespace

MockRuleTable MockRuleTable::standard() {
  MockRuleTable t;
  auto add = [&](std::string marker, Narrative n, int first, std::string counterpart,
                 std::vector<std::string> insertions) {
    MarkerRule r;
    r.marker = std::move(marker);
    r.narrative = n;
    r.first_feature = first;
    r.counterpart = std::move(counterpart);
    r.insertions = std::move(insertions);
    t.markers.push_back(std::move(r));
  };
  const auto ind = Narrative::individualistic;
  const auto col = Narrative::collectivistic;
  add("alone", ind, 1, "together",
      {"She chose to face it alone.", "He walked on alone, trusting his own judgment."});
  add("ambition", ind, 6, "family",
      {"Her ambition pushed her toward a goal of her own.",
       "His ambition was to earn the prize himself."});
  add("unique", ind, 11, "tradition",
      {"She knew her voice was unique.", "He was proud that his path was unique."});
  add("freedom", ind, 16, "community",
      {"What she wanted most was freedom.", "He claimed the freedom to decide for himself."});
  add("together", col, 21, "alone",
      {"They faced it together.", "Everyone in the village worked together."});
  add("family", col, 26, "ambition",
      {"She did it for her family.", "His family shared in every success."});
  add("tradition", col, 31, "unique",
      {"They honored the old tradition.", "The tradition of the elders guided them."});
  add("community", col, 36, "freedom",
      {"The whole community gathered to help.", "He gave his work to the community."});
  return t;
}

int MockRuleTable::rate(std::string_view text, int feature) const {
  const auto tokens = token_set(text);
  const int dual = dual_of(feature);
  int best = 0;
  for (const auto& m : markers) {
    if (!tokens.count(m.marker)) continue;
    if (m.covers(feature)) best = std::max(best, m.own_rating);
    if (m.covers(dual)) best = std::max(best, m.dual_rating);
  }
  return best == 0 ? default_rating : best;
}

const MarkerRule* MockRuleTable::marker_for(int feature) const {
  for (const auto& m : markers) {
    if (m.covers(feature)) return &m;
  }
  return nullptr;
}

const MarkerRule* MockRuleTable::find(std::string_view marker) const {
  for (const auto& m : markers) {
    if (m.marker == marker) return &m;
  }
  return nullptr;
}

std::optional<MockMode> parse_mock_mode(std::string_view text) {
  if (text == "rules") return MockMode::rules;
  if (text == "echo") return MockMode::echo;
  return std::nullopt;
}

MockProvider::MockProvider(MockRuleTable table, std::uint64_t seed, MockMode mode)
    : table_(std::move(table)), seed_(seed), mode_(mode) {}

ChatResponse MockProvider::complete(const ChatRequest& request) {
  calls_.fetch_add(1);
  if (auth_failure_.load()) throw ProviderFailure(ProviderFailure::Kind::auth, "HTTP 401");
  if (transient_failures_.load() > 0) {
    transient_failures_.fetch_sub(1);
    throw ProviderFailure(ProviderFailure::Kind::transient, "HTTP 503");
  }
  if (request.messages.empty()) return {};

  std::string joined;
  for (const auto& m : request.messages) joined += m.content;
  const std::uint64_t rng_seed = seed_ ^ fnv1a(joined);
  const std::string& last = request.messages.back().content;

  for (const auto& m : request.messages) {
    if (auto survey = parse_survey_prompt(m.content)) {
      return {std::to_string(table_.rate(survey->text, survey->feature)), std::nullopt};
    }
  }
  if (mode_ == MockMode::echo) return {last, std::nullopt};

  for (const auto& m : request.messages) {
    if (auto t = parse_transform_prompt(m.content)) {
      return {rewrite_segment(t->story, t->segment, t->target, t->feature, rng_seed), std::nullopt};
    }
  }
  if (request.messages.size() >= 2 && parse_baseline_instruction(request.messages.front().content)) {
    return {baseline_rewrite(last, rng_seed), std::nullopt};
  }
  return {last, std::nullopt};
}

std::string MockProvider::rewrite_segment(const std::string& story, const std::string& segment,
                                          Narrative target, std::optional<int> feature,
                                          std::uint64_t rng_seed) const {
  const auto pos = story.find(segment);
  if (segment.empty() || pos == std::string::npos) return story;

  // Swap whole-word source markers for their target counterparts.
  std::string rewritten;
  bool swapped = false;
  std::size_t i = 0;
  while (i < segment.size()) {
    if (!is_ascii_alpha(segment[i])) {
      rewritten += segment[i++];
      continue;
    }
    std::size_t end = i;
    while (end < segment.size() && is_ascii_alpha(segment[end])) ++end;
    std::string word = segment.substr(i, end - i);
    std::string lower = word;
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    const MarkerRule* m = table_.find(lower);
    if (m != nullptr && m->narrative != target) {
      std::string replacement = m->counterpart;
      if (std::isupper(static_cast<unsigned char>(word[0]))) {
        replacement[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(replacement[0])));
      }
      word = replacement;
      swapped = true;
    }
    rewritten += word;
    i = end;
  }

  const MarkerRule* wanted = nullptr;
  if (feature) {
    const MarkerRule* m = table_.marker_for(*feature);
    if (m != nullptr && m->narrative == target) wanted = m;
  } else if (!swapped) {
    const auto present = token_set(rewritten);
    for (const auto& m : table_.markers) {
      if (m.narrative == target && !present.count(m.marker)) {
        wanted = &m;
        break;
      }
    }
  }
  if (wanted != nullptr && !token_set(rewritten).count(wanted->marker) && !wanted->insertions.empty()) {
    std::mt19937_64 rng(rng_seed);
    std::uniform_int_distribution<std::size_t> pick(0, wanted->insertions.size() - 1);
    while (!rewritten.empty() && std::isspace(static_cast<unsigned char>(rewritten.back()))) {
      rewritten.pop_back();
    }
    rewritten += " " + wanted->insertions[pick(rng)];
  }
  return story.substr(0, pos) + rewritten + story.substr(pos + segment.size());
}

std::string MockProvider::baseline_rewrite(const std::string& story, std::uint64_t rng_seed) const {
  std::mt19937_64 rng(rng_seed);
  std::uniform_int_distribution<std::size_t> pick(0, kPrefixes.size() - 1);
  std::string out;
  bool at_start = true;
  for (std::size_t i = 0; i < story.size(); ++i) {
    const char c = story[i];
    if (at_start && !std::isspace(static_cast<unsigned char>(c))) {
      out += kPrefixes[pick(rng)];
      const bool lone_i = c == 'I' && (i + 1 >= story.size() || !is_ascii_alpha(story[i + 1]));
      out += (std::isupper(static_cast<unsigned char>(c)) && !lone_i)
                 ? static_cast<char>(std::tolower(static_cast<unsigned char>(c)))
                 : c;
      at_start = false;
      continue;
    }
    out += c;
    if (c == '.' || c == '!' || c == '?') {
      at_start = i + 1 < story.size() && std::isspace(static_cast<unsigned char>(story[i + 1]));
    }
  }
  return out;
}

std::shared_ptr<MockProvider> make_mock_provider(std::uint64_t seed, MockMode mode) {
  return std::make_shared<MockProvider>(MockRuleTable::standard(), seed, mode);
}

}  // namespace narrshift
