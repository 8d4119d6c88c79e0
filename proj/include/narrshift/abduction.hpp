#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "narrshift/corpus.hpp"
#include "narrshift/logic.hpp"

namespace narrshift {

// O for one story: contains/c_feat atoms plus the chunk order, which the
// tie rules refer to.
struct Observations {
  std::string story_id;
  std::vector<std::string> chunks;
  std::vector<GroundAtom> atoms;

  static Observations from(const Story& story, std::vector<GroundAtom> atoms);
  // Observed c_feat annotation, or nullopt when the atom is absent.
  std::optional<double> c_feat(std::size_t chunk, int feature) const;
};

// c_feat(chunk, feature) raised from `observed` to `raised`.
struct Candidate {
  std::size_t chunk = 0;
  int feature = 0;
  double observed = 0.0;
  double raised = 1.0;
  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct Hypothesis {
  std::vector<Candidate> candidates;
};

// Candidates for every observed c_feat atom of a target feature below 1.0.
// By default only mu' = 1.0 is proposed; `all_levels` proposes every grid level above mu.
Hypothesis build_hypothesis(const Observations& obs, Narrative target, bool all_levels = false);

struct ExplanationAtom {
  Candidate candidate;
  std::string chunk_id;
  double marginal = 0.0;  // sigma(E) - sigma(E without this atom)
};

struct Explanation {
  std::vector<ExplanationAtom> atoms;  // sorted by (chunk index, feature)
  double score = 0.0;
  double s_feat_before = 0.0;
  double s_feat_after = 0.0;
  std::size_t feature_count = 0;

  std::vector<GroundAtom> ground_atoms() const;
  // Distinct abduced chunk indices, ascending.
  std::vector<std::size_t> chunks() const;
};

std::vector<GroundAtom> to_ground_atoms(const Observations& obs, const std::vector<Candidate>& e);

// sigma = corpus_sim(s, target) under program + obs + e minus the same without e.
// `program` carries the templates and learned rules; throws ConfigError when
// it has no corpus-similarity rule for `target`.
double parsimony(const LogicProgram& program, const Observations& obs,
                 const std::vector<Candidate>& e, Narrative target);

struct SolveOptions {
  bool all_levels = false;
};

// phi_k: k distinct features, one chunk each, maximizing sigma. Ties go to
// higher post-hoc s_feat, then larger total annotation gain, then the
// lexicographically smallest (chunk index, feature) set. Throws
// EmptyExplanation when nothing can be raised.
Explanation solve(const LogicProgram& program, const Observations& obs, Narrative target,
                  std::size_t k, const SolveOptions& options = {});

// The abduced feature and target annotation for one chunk: the atom with the
// highest marginal sigma, ties to the lowest feature. Throws LookupError.
std::pair<int, double> extract_feature(const Explanation& e, std::size_t chunk);

nlohmann::ordered_json to_json(const Explanation& e, const Story& story);

}  // namespace narrshift
