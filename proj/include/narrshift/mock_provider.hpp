#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "narrshift/llm_gateway.hpp"
#include "narrshift/narrative.hpp"

namespace narrshift {

// A marker token and the five survey features it speaks to. Its presence
// rates those features `own_rating` and their duals `dual_rating`.
struct MarkerRule {
  std::string marker;
  Narrative narrative = Narrative::individualistic;
  int first_feature = 1;  // covers first_feature .. first_feature+4
  int own_rating = 5;
  int dual_rating = 1;
  // Marker of the opposite narrative this one is swapped with on rewrite.
  std::string counterpart;
  // Sentences inserted when the marker has to be introduced ("{}" -> marker).
  std::vector<std::string> insertions;

  bool covers(int feature) const { return feature >= first_feature && feature < first_feature + 5; }
};

struct MockRuleTable {
  std::vector<MarkerRule> markers;
  int default_rating = 3;

  // alone/ambition/unique/freedom for f1-20, together/family/tradition/community for f21-40.
  static MockRuleTable standard();

  // Max over the ratings of markers present in `text`; `default_rating` when none applies.
  int rate(std::string_view text, int feature) const;
  const MarkerRule* marker_for(int feature) const;
  const MarkerRule* find(std::string_view marker) const;
};

enum class MockMode { rules, echo };

std::optional<MockMode> parse_mock_mode(std::string_view text);

// Deterministic stand-in for a chat model.
//  - survey prompts: the rule-table rating, as a bare digit
//  - segment rewrite prompts: the story with only the segment changed, source
//    markers swapped for their target counterparts and, when the steered
//    feature's marker is still missing, one seeded sentence carrying it
//  - baseline prompts: every sentence gets a seeded stylistic prefix; markers stay
//  - anything else, and every non-survey prompt in echo mode: the last message
class MockProvider : public Provider {
 public:
  MockProvider(MockRuleTable table, std::uint64_t seed, MockMode mode = MockMode::rules);

  ChatResponse complete(const ChatRequest& request) override;
  std::string name() const override { return "mock"; }

  // Fault injection for gateway tests.
  void fail_transiently(int times) { transient_failures_ = times; }
  void fail_auth(bool on) { auth_failure_ = on; }
  long calls() const { return calls_.load(); }

  const MockRuleTable& table() const noexcept { return table_; }

 private:
  std::string rewrite_segment(const std::string& story, const std::string& segment,
                              Narrative target, std::optional<int> feature,
                              std::uint64_t rng_seed) const;
  std::string baseline_rewrite(const std::string& story, std::uint64_t rng_seed) const;

  MockRuleTable table_;
  std::uint64_t seed_;
  MockMode mode_;
  std::atomic<int> transient_failures_{0};
  std::atomic<bool> auth_failure_{false};
  std::atomic<long> calls_{0};
};

std::shared_ptr<MockProvider> make_mock_provider(std::uint64_t seed, MockMode mode = MockMode::rules);

}  // namespace narrshift
