#include <cstdlib>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "narrshift/errors.hpp"
#include "narrshift/rule_learning.hpp"
#include "support.hpp"

using namespace narrshift;
using testing_support::fixture;

TEST(Confidence, SurvivalFractions) {
  const auto t = confidence_from_levels({1.0, 0.8, 0.8, 0.8, 0.4}, Narrative::individualistic,
                                        AggKind::mean);
  EXPECT_EQ(t.at(0.0), 1.0);
  EXPECT_EQ(t.at(0.4), 1.0);
  EXPECT_EQ(t.at(0.6), 0.8);
  EXPECT_EQ(t.at(0.8), 0.8);
  EXPECT_EQ(t.at(1.0), 0.2);
  EXPECT_EQ(t.corpus_size, 5u);
  EXPECT_THROW(confidence_from_levels({}, Narrative::individualistic, AggKind::mean), LearnError);
}

TEST(Confidence, NonIncreasingInLevel) {
  const auto t = confidence_from_levels({0.2, 0.9, 0.5, 1.0, 0.0, 0.7}, Narrative::collectivistic,
                                        AggKind::max);
  for (std::size_t i = 1; i < t.conf.size(); ++i) EXPECT_LE(t.conf[i], t.conf[i - 1]);
  EXPECT_EQ(t.conf[0], 1.0);
}

TEST(LearnedRules, HeadsAreConfidenceTimesLevel) {
  const auto t = confidence_from_levels({0.6, 0.6}, Narrative::individualistic, AggKind::mean);
  const auto rules = learned_rules(t);
  // conf is zero at 0.8 and 1.0, so four rules remain
  ASSERT_EQ(rules.size(), 4u);
  EXPECT_EQ(rules[3], corpus_similarity_rule(Narrative::individualistic, 0.6, 0.6));
  EXPECT_EQ(rules[0].head_annotation.value, 0.0);
}

TEST(Learn, FixtureCorpusMatchesHandCounts) {
  // marker groups per story: 4,4,3,2,2,1 -> s_feat 1.0,1.0,0.9,0.8,0.8,0.7
  for (const char* name : {"train_individualistic.jsonl", "train_collectivistic.jsonl"}) {
    const auto corpus = load_corpus(fixture(name));
    auto m = testing_support::mock_gateway();
    LearnConfig cfg;
    cfg.diagnosis.runs = 1;
    const auto learned = learn_rules(corpus, *m.gateway, cfg);
    const std::vector<double> levels = {1.0, 1.0, 0.9, 0.8, 0.8, 0.7};
    ASSERT_EQ(learned.story_levels.size(), levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i) EXPECT_NEAR(learned.story_levels[i], levels[i], 1e-12);
    const std::array<double, 6> expected = {1.0, 1.0, 1.0, 1.0, 5.0 / 6.0, 2.0 / 6.0};
    EXPECT_EQ(learned.table.conf, expected) << name;
    EXPECT_EQ(learned.table.orientation, corpus.orientation);
    EXPECT_EQ(learned.provenance.corpus_hash, corpus_hash(corpus.stories));
    EXPECT_EQ(learned.provenance.provider, "mock");
  }
}

TEST(Learn, AggregatorChangesLevels) {
  const auto corpus = load_corpus(fixture("train_individualistic.jsonl"));
  auto m = testing_support::mock_gateway();
  LearnConfig cfg;
  cfg.diagnosis.runs = 1;
  cfg.agg = AggKind::max;
  const auto learned = learn_rules(corpus, *m.gateway, cfg);
  for (double v : learned.story_levels) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(learned.table.at(1.0), 1.0);
}

TEST(Learn, EmptyCorpus) {
  Corpus empty;
  auto m = testing_support::mock_gateway();
  EXPECT_THROW(learn_rules(empty, *m.gateway), LearnError);
}

TEST(RulesFile, RoundTripAndVersion) {
  const auto dir = testing_support::scratch("rules_file");
  LearnedRules r;
  r.table = confidence_from_levels({1.0, 0.8, 0.6}, Narrative::collectivistic, AggKind::median);
  r.rules = learned_rules(r.table);
  r.story_levels = {1.0, 0.8, 0.6};
  r.provenance = {"abc", "mock", "mock", AggKind::median, "2020-01-01T00:00:00Z"};
  save_rules(r, dir / "rules.json");
  const auto back = load_rules(dir / "rules.json");
  EXPECT_EQ(back.table, r.table);
  EXPECT_EQ(back.rules, r.rules);
  EXPECT_EQ(back.provenance, r.provenance);
  EXPECT_EQ(back.story_levels, r.story_levels);

  auto j = nlohmann::json::parse(rules_to_json(r).dump());
  j["version"] = 2;
  EXPECT_THROW(rules_from_json(j), VersionError);
  j["version"] = 1;
  j["conf"]["0.4"] = 1.5;
  EXPECT_THROW(rules_from_json(j), ConfigError);
  EXPECT_THROW(load_rules(dir / "missing.json"), IOError);
  std::ofstream(dir / "bad.json") << "{";
  EXPECT_THROW(load_rules(dir / "bad.json"), ConfigError);
}

TEST(RulesFile, StoryProgramNeedsRules) {
  LearnedRules none;
  EXPECT_THROW(story_program(none, {}), ConfigError);
}

TEST(Provenance, TimestampHonoursSourceDateEpoch) {
  setenv("SOURCE_DATE_EPOCH", "0", 1);
  EXPECT_EQ(provenance_timestamp(), "1970-01-01T00:00:00Z");
  unsetenv("SOURCE_DATE_EPOCH");
  EXPECT_EQ(provenance_timestamp().size(), 20u);
}
