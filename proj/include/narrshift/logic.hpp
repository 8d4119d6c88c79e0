#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "narrshift/narrative.hpp"

namespace narrshift {

// Annotated logic over five fixed binary predicates. Annotations are scalar
// lower bounds in [0,1] ordered by value; join is max and bottom is 0.

inline constexpr double kGridTolerance = 1e-9;

class Annotation {
 public:
  constexpr Annotation() = default;
  // Throws ProgramError outside [0,1].
  explicit Annotation(double lower);

  static constexpr Annotation bottom() { return Annotation(); }
  double lower() const noexcept { return lower_; }
  Annotation join(Annotation other) const noexcept {
    return other.lower_ > lower_ ? other : *this;
  }
  // a >= b up to grid tolerance.
  bool at_least(double threshold) const noexcept { return lower_ >= threshold - kGridTolerance; }

  friend auto operator<=>(const Annotation&, const Annotation&) = default;

 private:
  double lower_ = 0.0;
};

enum class Predicate { s_feat, c_feat, corpus_sim, contains, associated };
enum class ArgKind { story, chunk, narrative, feature };

std::string_view to_string(Predicate p);
std::optional<Predicate> parse_predicate(std::string_view text);
std::pair<ArgKind, ArgKind> signature(Predicate p);

struct AtomKey {
  Predicate predicate = Predicate::s_feat;
  std::string first;
  std::string second;

  friend auto operator<=>(const AtomKey&, const AtomKey&) = default;
  friend bool operator==(const AtomKey&, const AtomKey&) = default;
};

std::string to_string(const AtomKey& key);

struct GroundAtom {
  AtomKey key;
  Annotation annotation;

  friend bool operator==(const GroundAtom&, const GroundAtom&) = default;
};

GroundAtom make_atom(Predicate p, std::string first, std::string second, double annotation);

// Feature constants are "f1".."f40"; f1..f20 are individualistic.
std::string feature_constant(int index);
std::optional<int> parse_feature_constant(std::string_view text);
bool is_grid_level(double value);
// Grid {0, 0.2, ..., 1.0} as integer levels 0..5 and back.
int to_grid_index(double value);
double grid_value(int index);

// Ground interpretation: one joined annotation per atom, absent = bottom.
class Interpretation {
 public:
  using Map = std::map<AtomKey, double>;

  double get(const AtomKey& key) const;
  bool contains(const AtomKey& key) const { return atoms_.count(key) != 0; }
  // Joins `value` into the stored annotation; returns true on change.
  bool join(const AtomKey& key, double value);
  void join(const GroundAtom& atom) { join(atom.key, atom.annotation.lower()); }
  const Map& atoms() const noexcept { return atoms_; }
  std::size_t size() const noexcept { return atoms_.size(); }
  std::vector<GroundAtom> to_atoms() const;

  friend bool operator==(const Interpretation&, const Interpretation&) = default;

 private:
  Map atoms_;
};

struct Term {
  std::string name;
  bool variable = false;

  static Term var(std::string name) { return {std::move(name), true}; }
  static Term constant(std::string name) { return {std::move(name), false}; }
  friend bool operator==(const Term&, const Term&) = default;
};

struct AtomPattern {
  Predicate predicate = Predicate::s_feat;
  Term first;
  Term second;
  friend bool operator==(const AtomPattern&, const AtomPattern&) = default;
};

// A body literal is satisfied by a stored atom whose annotation is at least
// `threshold`. In aggregate rules, non-guard literals are value literals: a
// missing or below-threshold value atom contributes bottom instead of
// discarding the grounding.
struct BodyLiteral {
  AtomPattern atom;
  double threshold = 0.0;
  bool guard = true;
  friend bool operator==(const BodyLiteral&, const BodyLiteral&) = default;
};

struct HeadAnnotation {
  enum class Kind { copy_body, constant };
  Kind kind = Kind::copy_body;
  double value = 0.0;

  static HeadAnnotation copy_body() { return {}; }
  static HeadAnnotation constant(double v) { return {Kind::constant, v}; }
  friend bool operator==(const HeadAnnotation&, const HeadAnnotation&) = default;
};

enum class AggKind { mean, max, median };

std::string_view to_string(AggKind agg);
std::optional<AggKind> parse_agg(std::string_view text);
double aggregate_values(AggKind agg, std::vector<double> values);

struct AggregateSpec {
  AggKind kind = AggKind::mean;
  std::string group_variable;
  friend bool operator==(const AggregateSpec&, const AggregateSpec&) = default;
};

// Copy-body heads receive the minimum of the matched body annotations. An
// aggregate rule first joins groundings per binding of the group variable,
// then combines the per-group values with the aggregator.
struct Rule {
  AtomPattern head;
  HeadAnnotation head_annotation;
  std::vector<BodyLiteral> body;
  std::optional<AggregateSpec> aggregate;
  friend bool operator==(const Rule&, const Rule&) = default;
};

struct LogicProgram {
  Interpretation facts;
  std::vector<Rule> rules;

  void add_fact(const GroundAtom& atom);
  void add_facts(const std::vector<GroundAtom>& atoms);
  // Throws ProgramError on arity/domain/threshold/safety violations or on
  // recursion through an aggregate rule.
  void validate() const;
};

// associated(ind, f1..f20) and associated(col, f21..f40), all at 1.
std::vector<GroundAtom> assoc_facts();

// Least fixpoint of the program under join semantics.
Interpretation deduce(const LogicProgram& program);
Interpretation deduce(const LogicProgram& program, const std::vector<GroundAtom>& extra_facts);

// Chunk-to-story template: s_feat(S,N) <- contains(S,C), associated(N,F), c_feat(C,F)
// with per-feature max over chunks and `agg` across features.
Rule feature_aggregation_rule(AggKind agg);

// Story-to-corpus template instance: corpus_sim(S,n)_head <- s_feat(S,n) >= level.
Rule corpus_similarity_rule(Narrative n, double level, double head);

// Direct two-stage computation of s_feat(story, n) from chunk atoms, without
// the fixpoint engine. Throws DegenerateStory when the story has no chunks.
Annotation aggregate_s_feat(const Interpretation& facts, std::string_view story_id, Narrative n,
                            AggKind agg);
Annotation aggregate_s_feat(const LogicProgram& program, std::string_view story_id, Narrative n,
                            AggKind agg);

nlohmann::json program_to_json(const LogicProgram& program);
LogicProgram program_from_json(const nlohmann::json& j);
nlohmann::json rule_to_json(const Rule& rule);
Rule rule_from_json(const nlohmann::json& j);

}  // namespace narrshift
