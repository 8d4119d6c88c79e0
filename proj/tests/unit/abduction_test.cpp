#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "narrshift/abduction.hpp"
#include "narrshift/errors.hpp"
#include "narrshift/rule_learning.hpp"
#include "oracles.hpp"

using namespace narrshift;

namespace {

// Two chunks, individualistic target, survival table from the fixture corpus.
struct Small {
  LogicProgram program;
  Observations obs;
};

Small small_story(AggKind agg = AggKind::mean) {
  LearnedRules learned;
  learned.table = confidence_from_levels({1.0, 1.0, 0.9, 0.8, 0.8, 0.7}, Narrative::individualistic, agg);
  learned.rules = learned_rules(learned.table);
  Small s;
  s.program = story_program(learned, {});
  s.obs.story_id = "s";
  s.obs.chunks = {"s#0", "s#1"};
  for (const auto& c : s.obs.chunks) s.obs.atoms.push_back(make_atom(Predicate::contains, "s", c, 1.0));
  for (int f = 1; f <= 20; ++f) {
    s.obs.atoms.push_back(make_atom(Predicate::c_feat, "s#0", feature_constant(f), 0.6));
    s.obs.atoms.push_back(make_atom(Predicate::c_feat, "s#1", feature_constant(f), f <= 5 ? 0.2 : 0.6));
  }
  return s;
}

}  // namespace

TEST(Hypothesis, TopLevelOnlyByDefault) {
  const auto s = small_story();
  const auto h = build_hypothesis(s.obs, Narrative::individualistic);
  EXPECT_EQ(h.candidates.size(), 40u);
  for (const auto& c : h.candidates) EXPECT_EQ(c.raised, 1.0);
  const auto grid = build_hypothesis(s.obs, Narrative::individualistic, true);
  // 0.6 -> {0.8, 1.0} on 35 atoms, 0.2 -> {0.4 .. 1.0} on 5
  EXPECT_EQ(grid.candidates.size(), 35u * 2 + 5u * 4);
  EXPECT_TRUE(build_hypothesis(s.obs, Narrative::collectivistic).candidates.empty());
}

TEST(Solve, PicksLargestRiseAndBreaksTiesByChunkThenFeature) {
  const auto s = small_story();
  const auto e = solve(s.program, s.obs, Narrative::individualistic, 2);
  ASSERT_EQ(e.atoms.size(), 2u);
  EXPECT_EQ(e.feature_count, 2u);
  // every feature's max rises by 0.4; the larger annotation gain sits in
  // chunk 1 for f1-f5, then the lowest features win
  EXPECT_EQ(e.atoms[0].candidate, (Candidate{1, 1, 0.2, 1.0}));
  EXPECT_EQ(e.atoms[1].candidate, (Candidate{1, 2, 0.2, 1.0}));
  EXPECT_NEAR(e.s_feat_before, 0.6, 1e-12);
  EXPECT_NEAR(e.s_feat_after, 0.64, 1e-12);
  EXPECT_NEAR(e.score, oracle::sigma_via_deduce(s.program, s.obs,
                                                {e.atoms[0].candidate, e.atoms[1].candidate},
                                                Narrative::individualistic),
              1e-12);
  EXPECT_EQ(e.chunks(), (std::vector<std::size_t>{1}));
}

TEST(Solve, LargestFeatureRiseWins) {
  auto s = small_story();
  // f1 low in both chunks: raising it anywhere lifts its max from 0.2
  for (auto& a : s.obs.atoms) {
    if (a.key.predicate == Predicate::c_feat && a.key.second == "f1") a.annotation = Annotation(0.2);
  }
  const auto e = solve(s.program, s.obs, Narrative::individualistic, 1);
  ASSERT_EQ(e.atoms.size(), 1u);
  EXPECT_EQ(e.atoms[0].candidate.feature, 1);
  EXPECT_EQ(e.atoms[0].candidate.chunk, 0u);
  EXPECT_NEAR(e.s_feat_after - e.s_feat_before, 0.04, 1e-12);
}

TEST(Solve, EmptyAndInvalidBudgets) {
  auto s = small_story();
  EXPECT_THROW(solve(s.program, s.obs, Narrative::individualistic, 0), PreconditionError);
  for (auto& a : s.obs.atoms) {
    if (a.key.predicate == Predicate::c_feat) a.annotation = Annotation(1.0);
  }
  EXPECT_THROW(solve(s.program, s.obs, Narrative::individualistic, 2), EmptyExplanation);
  // k larger than the number of raisable features takes them all
  Observations obs;
  obs.story_id = "s";
  obs.chunks = {"s#0"};
  obs.atoms = {make_atom(Predicate::contains, "s", "s#0", 1.0),
               make_atom(Predicate::c_feat, "s#0", "f3", 0.4)};
  const auto e = solve(s.program, obs, Narrative::individualistic, 3);
  EXPECT_EQ(e.feature_count, 1u);
}

TEST(Solve, MissingCorpusRuleIsAConfigError) {
  const auto s = small_story();
  LogicProgram no_rules;
  no_rules.rules.push_back(feature_aggregation_rule(AggKind::mean));
  EXPECT_THROW(parsimony(no_rules, s.obs, {}, Narrative::individualistic), ConfigError);
}

TEST(Solve, MatchesExhaustiveEnumeration) {
  std::mt19937_64 rng(99);
  int solved = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const auto inst = oracle::random_instance(rng);
    for (bool all_levels : {false, true}) {
      const auto h = build_hypothesis(inst.obs, inst.target, all_levels);
      if (h.candidates.empty()) {
        EXPECT_THROW(solve(inst.program, inst.obs, inst.target, inst.k, {all_levels}),
                     EmptyExplanation);
        continue;
      }
      const auto e = solve(inst.program, inst.obs, inst.target, inst.k, {all_levels});
      const auto best = oracle::exhaustive_best(inst.program, inst.obs, h, inst.target, inst.k);
      EXPECT_NEAR(e.score, best.best_sigma, 1e-12) << "trial " << trial;
      ++solved;
    }
  }
  EXPECT_GT(solved, 150);
}

TEST(Solve, ExplanationNeverLowersObservations) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const auto inst = oracle::random_instance(rng);
    if (build_hypothesis(inst.obs, inst.target).candidates.empty()) continue;
    const auto e = solve(inst.program, inst.obs, inst.target, inst.k);
    auto atoms = inst.obs.atoms;
    const auto extra = e.ground_atoms();
    const auto closure = deduce(inst.program, [&] {
      atoms.insert(atoms.end(), extra.begin(), extra.end());
      return atoms;
    }());
    for (const auto& a : inst.obs.atoms) EXPECT_GE(closure.get(a.key), a.annotation.lower());
  }
}

TEST(Solve, BudgetMonotonicity) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    auto inst = oracle::random_instance(rng);
    if (build_hypothesis(inst.obs, inst.target).candidates.empty()) continue;
    double prev = -1.0;
    for (std::size_t k = 1; k <= 4; ++k) {
      const double sigma = solve(inst.program, inst.obs, inst.target, k).score;
      EXPECT_GE(sigma, prev - 1e-12);
      prev = sigma;
    }
  }
}

TEST(Solve, Deterministic) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = oracle::random_instance(rng);
    if (build_hypothesis(inst.obs, inst.target).candidates.empty()) continue;
    const auto a = solve(inst.program, inst.obs, inst.target, inst.k);
    const auto b = solve(inst.program, inst.obs, inst.target, inst.k);
    Story story;
    story.id = "s";
    for (std::size_t c = 0; c < inst.obs.chunks.size(); ++c) {
      story.chunks.push_back({inst.obs.chunks[c], "s", c, "chunk text", 2});
    }
    EXPECT_EQ(to_json(a, story).dump(), to_json(b, story).dump());
  }
}

TEST(ExtractFeature, HighestMarginalThenLowestFeature) {
  Explanation e;
  e.atoms = {{{0, 5, 0.2, 1.0}, "s#0", 0.1},
             {{0, 3, 0.2, 1.0}, "s#0", 0.1},
             {{1, 2, 0.2, 0.8}, "s#1", 0.3}};
  EXPECT_EQ(extract_feature(e, 0), (std::pair<int, double>{3, 1.0}));
  EXPECT_EQ(extract_feature(e, 1), (std::pair<int, double>{2, 0.8}));
  EXPECT_THROW(extract_feature(e, 2), LookupError);
}

TEST(ExplanationJson, ExcerptIsShortAndUtf8Safe) {
  Story story;
  story.id = "s";
  std::string text;
  for (int i = 0; i < 60; ++i) text += "é";
  story.chunks.push_back({"s#0", "s", 0, text, 1});
  Explanation e;
  e.atoms = {{{0, 1, 0.2, 1.0}, "s#0", 0.1}};
  const auto j = to_json(e, story);
  const std::string excerpt = j.at("atoms").at(0).at("excerpt").get<std::string>();
  EXPECT_LE(excerpt.size(), 80u + 3u);
  EXPECT_NO_THROW(nlohmann::json::parse(j.dump()));
}
