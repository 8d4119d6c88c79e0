#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "narrshift/corpus.hpp"
#include "narrshift/diagnosis.hpp"
#include "narrshift/logic.hpp"

namespace narrshift {

inline constexpr int kRulesVersion = 1;

// conf(mu) = share of training stories with s_feat >= mu, for mu on the grid.
struct ConfidenceTable {
  Narrative orientation = Narrative::individualistic;
  std::array<double, 6> conf{};  // index = grid level 0..5
  std::size_t corpus_size = 0;
  AggKind agg = AggKind::mean;

  double at(double level) const { return conf.at(static_cast<std::size_t>(to_grid_index(level))); }
  friend bool operator==(const ConfidenceTable&, const ConfidenceTable&) = default;
};

// Survival fractions over the given story-level annotations. Throws LearnError when empty.
ConfidenceTable confidence_from_levels(const std::vector<double>& s_feat, Narrative orientation,
                                       AggKind agg);

// corpus_sim(S, n) with head conf(mu) * mu <- s_feat(S, n) >= mu, for each level with conf > 0.
std::vector<Rule> learned_rules(const ConfidenceTable& table);

struct Provenance {
  std::string corpus_hash;
  std::string provider;
  std::string model;
  AggKind agg = AggKind::mean;
  std::string timestamp;  // ISO-8601 UTC
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct LearnedRules {
  ConfidenceTable table;
  std::vector<Rule> rules;
  Provenance provenance;
  // s_feat(s, orientation) per training story, in corpus order.
  std::vector<double> story_levels;
};

struct LearnConfig {
  AggKind agg = AggKind::mean;
  DiagnosisOptions diagnosis;
};

// Phase 1: diagnose each training story's chunks, derive s_feat through the
// chunk-to-story template, count survival fractions and emit the rules.
LearnedRules learn_rules(const Corpus& corpus, Gateway& gateway, const LearnConfig& cfg = {});

// s_feat(story, n) through the fixpoint engine over the given observations.
double story_level(const std::string& story_id, const std::vector<GroundAtom>& obs, Narrative n,
                   AggKind agg);

// Facts (assoc + obs) and rules (aggregation template + learned rules) for one story.
LogicProgram story_program(const LearnedRules& learned, const std::vector<GroundAtom>& obs);

// SOURCE_DATE_EPOCH when set, otherwise the current time.
std::string provenance_timestamp();

nlohmann::ordered_json rules_to_json(const LearnedRules& rules);
LearnedRules rules_from_json(const nlohmann::json& j);
void save_rules(const LearnedRules& rules, const std::filesystem::path& path);
// Throws VersionError for any version other than 1.
LearnedRules load_rules(const std::filesystem::path& path);

}  // namespace narrshift
