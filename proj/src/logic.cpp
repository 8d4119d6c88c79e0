#include "narrshift/logic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "narrshift/errors.hpp"

namespace narrshift {
namespace {

constexpr int kFeatureCount = 40;
constexpr int kProgramVersion = 1;

using Binding = std::vector<std::pair<std::string, std::string>>;

const std::string* lookup(const Binding& b, const std::string& name) {
  for (const auto& [k, v] : b) {
    if (k == name) return &v;
  }
  return nullptr;
}

std::optional<std::string> resolve(const Term& t, const Binding& b) {
  if (!t.variable) return t.name;
  if (const auto* v = lookup(b, t.name)) return *v;
  return std::nullopt;
}

// Binds `t` to `value`; false when it is already bound to something else.
bool unify(const Term& t, const std::string& value, Binding& b) {
  if (!t.variable) return t.name == value;
  if (const auto* v = lookup(b, t.name)) return *v == value;
  b.emplace_back(t.name, value);
  return true;
}

AtomKey range_start(Predicate p, const std::string& first) { return AtomKey{p, first, ""}; }

// Calls `visit(binding, annotations)` for every way of satisfying `literals`
// against `interp`, extending `binding` left to right.
template <typename Visit>
void match(const std::vector<const BodyLiteral*>& literals, std::size_t i, Binding& binding,
           std::vector<double>& annotations, const Interpretation& interp, Visit&& visit) {
  if (i == literals.size()) {
    visit(binding, annotations);
    return;
  }
  const BodyLiteral& lit = *literals[i];
  const auto first = resolve(lit.atom.first, binding);
  const auto second = resolve(lit.atom.second, binding);
  const auto& atoms = interp.atoms();

  auto try_atom = [&](const AtomKey& key, double value) {
    if (value < lit.threshold - kGridTolerance) return;
    const std::size_t mark = binding.size();
    if (unify(lit.atom.first, key.first, binding) && unify(lit.atom.second, key.second, binding)) {
      annotations.push_back(value);
      match(literals, i + 1, binding, annotations, interp, visit);
      annotations.pop_back();
    }
    binding.resize(mark);
  };

  if (first && second) {
    const AtomKey key{lit.atom.predicate, *first, *second};
    if (auto it = atoms.find(key); it != atoms.end()) try_atom(it->first, it->second);
    return;
  }
  auto it = atoms.lower_bound(range_start(lit.atom.predicate, first.value_or("")));
  for (; it != atoms.end() && it->first.predicate == lit.atom.predicate; ++it) {
    if (first && it->first.first != *first) break;
    try_atom(it->first, it->second);
  }
}

AtomKey ground_head(const AtomPattern& head, const Binding& b) {
  return AtomKey{head.predicate, *resolve(head.first, b), *resolve(head.second, b)};
}

double min_of(const std::vector<double>& values) {
  double m = 1.0;
  for (double v : values) m = std::min(m, v);
  return m;
}

std::vector<std::pair<AtomKey, double>> fire_plain(const Rule& rule, const Interpretation& interp) {
  std::vector<const BodyLiteral*> literals;
  for (const auto& lit : rule.body) literals.push_back(&lit);
  std::vector<std::pair<AtomKey, double>> out;
  Binding binding;
  std::vector<double> annotations;
  match(literals, 0, binding, annotations, interp, [&](const Binding& b, const std::vector<double>& a) {
    const double value = rule.head_annotation.kind == HeadAnnotation::Kind::constant
                             ? rule.head_annotation.value
                             : min_of(a);
    out.emplace_back(ground_head(rule.head, b), value);
  });
  return out;
}

std::vector<std::pair<AtomKey, double>> fire_aggregate(const Rule& rule,
                                                       const Interpretation& interp) {
  std::vector<const BodyLiteral*> guards;
  std::vector<const BodyLiteral*> values;
  for (const auto& lit : rule.body) (lit.guard ? guards : values).push_back(&lit);

  // head atom -> group value -> joined value
  std::map<AtomKey, std::map<std::string, double>> groups;
  Binding binding;
  std::vector<double> annotations;
  match(guards, 0, binding, annotations, interp, [&](const Binding& b, const std::vector<double>& a) {
    double value = rule.head_annotation.kind == HeadAnnotation::Kind::constant
                       ? rule.head_annotation.value
                       : min_of(a);
    for (const BodyLiteral* lit : values) {
      const AtomKey key{lit->atom.predicate, *resolve(lit->atom.first, b),
                        *resolve(lit->atom.second, b)};
      const auto& atoms = interp.atoms();
      auto it = atoms.find(key);
      if (it == atoms.end() || it->second < lit->threshold - kGridTolerance) {
        value = 0.0;
        break;
      }
      if (rule.head_annotation.kind == HeadAnnotation::Kind::copy_body) {
        value = std::min(value, it->second);
      }
    }
    const std::string group = *lookup(b, rule.aggregate->group_variable);
    auto& slot = groups[ground_head(rule.head, b)];
    auto [pos, inserted] = slot.emplace(group, value);
    if (!inserted) pos->second = std::max(pos->second, value);
  });

  std::vector<std::pair<AtomKey, double>> out;
  for (const auto& [head, per_group] : groups) {
    std::vector<double> v;
    v.reserve(per_group.size());
    for (const auto& [g, value] : per_group) v.push_back(value);
    out.emplace_back(head, aggregate_values(rule.aggregate->kind, std::move(v)));
  }
  return out;
}

constexpr std::size_t kPredicateCount = 5;

std::size_t index_of(Predicate p) { return static_cast<std::size_t>(p); }

// Stratum per predicate: a head sits at or above its body predicates, and
// strictly above them for aggregate rules.
std::array<int, kPredicateCount> stratify(const std::vector<Rule>& rules) {
  std::array<int, kPredicateCount> level{};
  for (std::size_t pass = 0; pass <= kPredicateCount + 1; ++pass) {
    bool changed = false;
    for (const auto& rule : rules) {
      const int step = rule.aggregate ? 1 : 0;
      for (const auto& lit : rule.body) {
        const int need = level[index_of(lit.atom.predicate)] + step;
        if (level[index_of(rule.head.predicate)] < need) {
          level[index_of(rule.head.predicate)] = need;
          changed = true;
        }
      }
    }
    if (!changed) return level;
  }
  throw ProgramError("recursion through an aggregate rule");
}

void check_constant(ArgKind kind, const std::string& value, const std::string& where) {
  if (kind == ArgKind::narrative && value != "ind" && value != "col") {
    throw ProgramError(where + ": '" + value + "' is not a narrative constant");
  }
  if (kind == ArgKind::feature && !parse_feature_constant(value)) {
    throw ProgramError(where + ": '" + value + "' is not a feature constant");
  }
  if ((kind == ArgKind::story || kind == ArgKind::chunk) && value.empty()) {
    throw ProgramError(where + ": empty constant");
  }
}

void check_pattern(const AtomPattern& p, const std::string& where) {
  const auto [k1, k2] = signature(p.predicate);
  if (!p.first.variable) check_constant(k1, p.first.name, where);
  if (!p.second.variable) check_constant(k2, p.second.name, where);
  if (p.first.name.empty() || p.second.name.empty()) throw ProgramError(where + ": empty term");
}

void check_unit(double v, const std::string& where) {
  if (!(v >= 0.0 && v <= 1.0)) throw ProgramError(where + ": value outside [0,1]");
}

void collect_vars(const AtomPattern& p, std::set<std::string>& out) {
  if (p.first.variable) out.insert(p.first.name);
  if (p.second.variable) out.insert(p.second.name);
}

void validate_rule(const Rule& rule, std::size_t index) {
  const std::string where = "rule " + std::to_string(index);
  if (rule.body.empty()) throw ProgramError(where + ": empty body");
  check_pattern(rule.head, where + " head");
  if (rule.head_annotation.kind == HeadAnnotation::Kind::constant) {
    check_unit(rule.head_annotation.value, where + " head annotation");
  }
  std::set<std::string> guard_vars;
  std::set<std::string> all_vars;
  for (const auto& lit : rule.body) {
    check_pattern(lit.atom, where + " body");
    check_unit(lit.threshold, where + " threshold");
    if (!lit.guard && !rule.aggregate) {
      throw ProgramError(where + ": value literals are only allowed in aggregate rules");
    }
    collect_vars(lit.atom, all_vars);
    if (lit.guard) collect_vars(lit.atom, guard_vars);
  }
  std::set<std::string> head_vars;
  collect_vars(rule.head, head_vars);
  const auto& bound = rule.aggregate ? guard_vars : all_vars;
  for (const auto& v : head_vars) {
    if (!bound.count(v)) throw ProgramError(where + ": head variable " + v + " not bound by body");
  }
  if (rule.aggregate) {
    if (!guard_vars.count(rule.aggregate->group_variable)) {
      throw ProgramError(where + ": group variable not bound by a guard literal");
    }
    for (const auto& lit : rule.body) {
      if (lit.guard) continue;
      std::set<std::string> vars;
      collect_vars(lit.atom, vars);
      for (const auto& v : vars) {
        if (!guard_vars.count(v)) throw ProgramError(where + ": value literal variable " + v + " unbound");
      }
    }
  }
}

nlohmann::json term_to_json(const Term& t) { return t.variable ? "?" + t.name : t.name; }

Term term_from_json(const nlohmann::json& j) {
  const auto s = j.get<std::string>();
  if (!s.empty() && s[0] == '?') return Term::var(s.substr(1));
  return Term::constant(s);
}

nlohmann::json pattern_to_json(const AtomPattern& p) {
  return {{"predicate", to_string(p.predicate)},
          {"args", {term_to_json(p.first), term_to_json(p.second)}}};
}

AtomPattern pattern_from_json(const nlohmann::json& j) {
  const auto pred = parse_predicate(j.at("predicate").get<std::string>());
  if (!pred) throw ProgramError("unknown predicate " + j.at("predicate").dump());
  const auto& args = j.at("args");
  if (!args.is_array() || args.size() != 2) throw ProgramError("atoms are binary");
  return {*pred, term_from_json(args[0]), term_from_json(args[1])};
}

}  // namespace

Annotation::Annotation(double lower) : lower_(lower) {
  if (!(lower >= 0.0 && lower <= 1.0)) {
    throw ProgramError("annotation " + std::to_string(lower) + " outside [0,1]");
  }
}

std::string_view to_string(Predicate p) {
  switch (p) {
    case Predicate::s_feat: return "s_feat";
    case Predicate::c_feat: return "c_feat";
    case Predicate::corpus_sim: return "corpus_sim";
    case Predicate::contains: return "contains";
    case Predicate::associated: return "associated";
  }
  return "?";
}

std::optional<Predicate> parse_predicate(std::string_view text) {
  for (auto p : {Predicate::s_feat, Predicate::c_feat, Predicate::corpus_sim, Predicate::contains,
                 Predicate::associated}) {
    if (to_string(p) == text) return p;
  }
  return std::nullopt;
}

std::pair<ArgKind, ArgKind> signature(Predicate p) {
  switch (p) {
    case Predicate::s_feat: return {ArgKind::story, ArgKind::narrative};
    case Predicate::c_feat: return {ArgKind::chunk, ArgKind::feature};
    case Predicate::corpus_sim: return {ArgKind::story, ArgKind::narrative};
    case Predicate::contains: return {ArgKind::story, ArgKind::chunk};
    case Predicate::associated: return {ArgKind::narrative, ArgKind::feature};
  }
  return {ArgKind::story, ArgKind::story};
}

std::string to_string(const AtomKey& key) {
  return std::string(to_string(key.predicate)) + "(" + key.first + ", " + key.second + ")";
}

GroundAtom make_atom(Predicate p, std::string first, std::string second, double annotation) {
  return GroundAtom{AtomKey{p, std::move(first), std::move(second)}, Annotation(annotation)};
}

std::string feature_constant(int index) { return "f" + std::to_string(index); }

std::optional<int> parse_feature_constant(std::string_view text) {
  if (text.size() < 2 || text.size() > 3 || text[0] != 'f') return std::nullopt;
  int value = 0;
  for (char c : text.substr(1)) {
    if (c < '0' || c > '9') return std::nullopt;
    value = value * 10 + (c - '0');
  }
  if (text[1] == '0' || value < 1 || value > kFeatureCount) return std::nullopt;
  return value;
}

int to_grid_index(double value) { return static_cast<int>(std::lround(value * 5.0)); }

double grid_value(int index) {
  static constexpr std::array<double, 6> kGrid = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  return kGrid.at(static_cast<std::size_t>(index));
}

bool is_grid_level(double value) {
  if (!(value >= -kGridTolerance && value <= 1.0 + kGridTolerance)) return false;
  return std::abs(value - grid_value(std::clamp(to_grid_index(value), 0, 5))) <= kGridTolerance;
}

double Interpretation::get(const AtomKey& key) const {
  auto it = atoms_.find(key);
  return it == atoms_.end() ? 0.0 : it->second;
}

bool Interpretation::join(const AtomKey& key, double value) {
  auto [it, inserted] = atoms_.emplace(key, value);
  if (inserted) return true;
  if (value > it->second) {
    it->second = value;
    return true;
  }
  return false;
}

std::vector<GroundAtom> Interpretation::to_atoms() const {
  std::vector<GroundAtom> out;
  out.reserve(atoms_.size());
  for (const auto& [k, v] : atoms_) out.push_back(GroundAtom{k, Annotation(v)});
  return out;
}

std::string_view to_string(AggKind agg) {
  switch (agg) {
    case AggKind::mean: return "mean";
    case AggKind::max: return "max";
    case AggKind::median: return "median";
  }
  return "?";
}

std::optional<AggKind> parse_agg(std::string_view text) {
  if (text == "mean") return AggKind::mean;
  if (text == "max") return AggKind::max;
  if (text == "median") return AggKind::median;
  return std::nullopt;
}

double aggregate_values(AggKind agg, std::vector<double> values) {
  if (values.empty()) return 0.0;
  switch (agg) {
    case AggKind::max:
      return *std::max_element(values.begin(), values.end());
    case AggKind::mean: {
      double sum = 0.0;
      for (double v : values) sum += v;
      return std::clamp(sum / static_cast<double>(values.size()), 0.0, 1.0);
    }
    case AggKind::median: {
      std::sort(values.begin(), values.end());
      const std::size_t n = values.size();
      return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    }
  }
  return 0.0;
}

void LogicProgram::add_fact(const GroundAtom& atom) { facts.join(atom); }

void LogicProgram::add_facts(const std::vector<GroundAtom>& atoms) {
  for (const auto& a : atoms) facts.join(a);
}

void LogicProgram::validate() const {
  for (const auto& [key, value] : facts.atoms()) {
    const std::string where = "fact " + to_string(key);
    check_unit(value, where);
    const auto [k1, k2] = signature(key.predicate);
    check_constant(k1, key.first, where);
    check_constant(k2, key.second, where);
    if (key.predicate == Predicate::c_feat && !is_grid_level(value)) {
      throw ProgramError(where + ": c_feat annotation off the 0.2 grid");
    }
  }
  for (std::size_t i = 0; i < rules.size(); ++i) validate_rule(rules[i], i);
  stratify(rules);
}

std::vector<GroundAtom> assoc_facts() {
  std::vector<GroundAtom> out;
  out.reserve(kFeatureCount);
  for (int i = 1; i <= kFeatureCount; ++i) {
    out.push_back(make_atom(Predicate::associated, i <= 20 ? "ind" : "col", feature_constant(i), 1.0));
  }
  return out;
}

Interpretation deduce(const LogicProgram& program) { return deduce(program, {}); }

Interpretation deduce(const LogicProgram& program, const std::vector<GroundAtom>& extra_facts) {
  LogicProgram full{program.facts, program.rules};
  full.add_facts(extra_facts);
  full.validate();
  const auto level = stratify(full.rules);
  const int top = full.rules.empty() ? 0 : *std::max_element(level.begin(), level.end());

  Interpretation interp = full.facts;
  for (int stratum = 0; stratum <= top; ++stratum) {
    std::vector<const Rule*> active;
    for (const auto& r : full.rules) {
      if (level[index_of(r.head.predicate)] == stratum) active.push_back(&r);
    }
    if (active.empty()) continue;
    bool changed = true;
    while (changed) {
      changed = false;
      std::vector<std::pair<AtomKey, double>> derived;
      for (const Rule* r : active) {
        auto fired = r->aggregate ? fire_aggregate(*r, interp) : fire_plain(*r, interp);
        derived.insert(derived.end(), std::make_move_iterator(fired.begin()),
                       std::make_move_iterator(fired.end()));
      }
      for (const auto& [key, value] : derived) changed |= interp.join(key, value);
    }
  }
  return interp;
}

Rule feature_aggregation_rule(AggKind agg) {
  Rule r;
  r.head = {Predicate::s_feat, Term::var("S"), Term::var("N")};
  r.head_annotation = HeadAnnotation::copy_body();
  r.body = {
      {{Predicate::contains, Term::var("S"), Term::var("C")}, 1.0, true},
      {{Predicate::associated, Term::var("N"), Term::var("F")}, 1.0, true},
      {{Predicate::c_feat, Term::var("C"), Term::var("F")}, 0.0, false},
  };
  r.aggregate = AggregateSpec{agg, "F"};
  return r;
}

Rule corpus_similarity_rule(Narrative n, double level, double head) {
  Rule r;
  const std::string code(to_code(n));
  r.head = {Predicate::corpus_sim, Term::var("S"), Term::constant(code)};
  r.head_annotation = HeadAnnotation::constant(head);
  r.body = {{{Predicate::s_feat, Term::var("S"), Term::constant(code)}, level, true}};
  return r;
}

Annotation aggregate_s_feat(const Interpretation& facts, std::string_view story_id, Narrative n,
                            AggKind agg) {
  const auto& atoms = facts.atoms();
  std::vector<std::string> chunks;
  for (auto it = atoms.lower_bound(range_start(Predicate::contains, std::string(story_id)));
       it != atoms.end() && it->first.predicate == Predicate::contains &&
       it->first.first == story_id;
       ++it) {
    if (it->second >= 1.0 - kGridTolerance) chunks.push_back(it->first.second);
  }
  if (chunks.empty()) {
    throw DegenerateStory("story '" + std::string(story_id) + "' has no chunks");
  }
  const std::string code(to_code(n));
  std::vector<double> ratings;
  for (auto it = atoms.lower_bound(range_start(Predicate::associated, code));
       it != atoms.end() && it->first.predicate == Predicate::associated && it->first.first == code;
       ++it) {
    if (it->second < 1.0 - kGridTolerance) continue;
    double rho = 0.0;
    for (const auto& c : chunks) rho = std::max(rho, facts.get({Predicate::c_feat, c, it->first.second}));
    ratings.push_back(rho);
  }
  return Annotation(aggregate_values(agg, std::move(ratings)));
}

Annotation aggregate_s_feat(const LogicProgram& program, std::string_view story_id, Narrative n,
                            AggKind agg) {
  return aggregate_s_feat(program.facts, story_id, n, agg);
}

nlohmann::json rule_to_json(const Rule& rule) {
  nlohmann::json j;
  j["head"] = pattern_to_json(rule.head);
  if (rule.head_annotation.kind == HeadAnnotation::Kind::copy_body) {
    j["head_annotation"] = "copy-body";
  } else {
    j["head_annotation"] = rule.head_annotation.value;
  }
  auto body = nlohmann::json::array();
  for (const auto& lit : rule.body) {
    auto l = pattern_to_json(lit.atom);
    l["threshold"] = lit.threshold;
    l["guard"] = lit.guard;
    body.push_back(std::move(l));
  }
  j["body"] = std::move(body);
  if (rule.aggregate) {
    j["aggregate"] = {{"agg", to_string(rule.aggregate->kind)},
                      {"group", rule.aggregate->group_variable}};
  }
  return j;
}

Rule rule_from_json(const nlohmann::json& j) {
  try {
    Rule r;
    r.head = pattern_from_json(j.at("head"));
    const auto& ha = j.at("head_annotation");
    if (ha.is_string()) {
      if (ha.get<std::string>() != "copy-body") throw ProgramError("unknown head annotation");
      r.head_annotation = HeadAnnotation::copy_body();
    } else {
      r.head_annotation = HeadAnnotation::constant(ha.get<double>());
    }
    for (const auto& l : j.at("body")) {
      BodyLiteral lit;
      lit.atom = pattern_from_json(l);
      lit.threshold = l.value("threshold", 0.0);
      lit.guard = l.value("guard", true);
      r.body.push_back(std::move(lit));
    }
    if (j.contains("aggregate")) {
      const auto agg = parse_agg(j["aggregate"].at("agg").get<std::string>());
      if (!agg) throw ProgramError("unknown aggregator");
      r.aggregate = AggregateSpec{*agg, j["aggregate"].at("group").get<std::string>()};
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ProgramError(std::string("malformed rule: ") + e.what());
  }
}

nlohmann::json program_to_json(const LogicProgram& program) {
  nlohmann::json j;
  j["version"] = kProgramVersion;
  auto facts = nlohmann::json::array();
  for (const auto& [key, value] : program.facts.atoms()) {
    facts.push_back({{"predicate", to_string(key.predicate)},
                     {"args", {key.first, key.second}},
                     {"annotation", value}});
  }
  j["facts"] = std::move(facts);
  auto rules = nlohmann::json::array();
  for (const auto& r : program.rules) rules.push_back(rule_to_json(r));
  j["rules"] = std::move(rules);
  return j;
}

LogicProgram program_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("version").get<int>();
    if (version != kProgramVersion) {
      throw VersionError("program version " + std::to_string(version) + " is not supported");
    }
    LogicProgram program;
    for (const auto& f : j.at("facts")) {
      const auto pred = parse_predicate(f.at("predicate").get<std::string>());
      if (!pred) throw ProgramError("unknown predicate in fact");
      const auto& args = f.at("args");
      if (!args.is_array() || args.size() != 2) throw ProgramError("facts are binary");
      program.add_fact(make_atom(*pred, args[0].get<std::string>(), args[1].get<std::string>(),
                                 f.at("annotation").get<double>()));
    }
    for (const auto& r : j.at("rules")) program.rules.push_back(rule_from_json(r));
    program.validate();
    return program;
  } catch (const nlohmann::json::exception& e) {
    throw ProgramError(std::string("malformed program: ") + e.what());
  }
}

}  // namespace narrshift
