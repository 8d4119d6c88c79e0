#pragma once

// Independent reference implementations used only by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "narrshift/abduction.hpp"
#include "narrshift/logic.hpp"
#include "narrshift/rule_learning.hpp"

namespace oracle {

using narrshift::ArgKind;
using narrshift::AtomKey;
using narrshift::LogicProgram;
using narrshift::Predicate;
using narrshift::Rule;

inline const std::map<ArgKind, std::vector<std::string>>& small_domain() {
  static const std::map<ArgKind, std::vector<std::string>> d = {
      {ArgKind::story, {"s1", "s2"}},
      {ArgKind::chunk, {"c1", "c2"}},
      {ArgKind::narrative, {"ind", "col"}},
      {ArgKind::feature, {"f1", "f2", "f21"}},
  };
  return d;
}

inline double plain_mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return std::min(1.0, s / static_cast<double>(v.size()));
}

inline double plain_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double combine(narrshift::AggKind k, const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  switch (k) {
    case narrshift::AggKind::max:
      return *std::max_element(v.begin(), v.end());
    case narrshift::AggKind::mean:
      return plain_mean(v);
    case narrshift::AggKind::median:
      return plain_median(v);
  }
  return 0.0;
}

// Naive saturation: every rule, every assignment of its variables over the
// whole constant domain, repeated until nothing changes. Assumes aggregate
// bodies only read predicates no rule derives.
inline std::map<AtomKey, double> saturate(const LogicProgram& p,
                                          const std::map<ArgKind, std::vector<std::string>>& dom) {
  constexpr double tol = 1e-9;
  std::map<AtomKey, double> store(p.facts.atoms().begin(), p.facts.atoms().end());

  auto kinds_of = [](const Rule& r) {
    std::map<std::string, ArgKind> vars;
    auto add = [&](const narrshift::AtomPattern& a) {
      const auto [k1, k2] = narrshift::signature(a.predicate);
      if (a.first.variable) vars[a.first.name] = k1;
      if (a.second.variable) vars[a.second.name] = k2;
    };
    add(r.head);
    for (const auto& l : r.body) add(l.atom);
    return vars;
  };
  auto ground = [](const narrshift::AtomPattern& a, const std::map<std::string, std::string>& b) {
    return AtomKey{a.predicate, a.first.variable ? b.at(a.first.name) : a.first.name,
                   a.second.variable ? b.at(a.second.name) : a.second.name};
  };

  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<std::pair<AtomKey, double>> derived;
    for (const auto& r : p.rules) {
      const auto vars = kinds_of(r);
      std::vector<std::string> names;
      for (const auto& [n, k] : vars) names.push_back(n);
      std::map<AtomKey, std::map<std::string, double>> groups;
      std::map<std::string, std::string> b;
      std::function<void(std::size_t)> assign = [&](std::size_t i) {
        if (i < names.size()) {
          for (const auto& c : dom.at(vars.at(names[i]))) {
            b[names[i]] = c;
            assign(i + 1);
          }
          return;
        }
        double v = 1.0;
        for (const auto& l : r.body) {
          if (!l.guard) continue;
          const auto it = store.find(ground(l.atom, b));
          if (it == store.end() || it->second < l.threshold - tol) return;
          v = std::min(v, it->second);
        }
        if (r.head_annotation.kind == narrshift::HeadAnnotation::Kind::constant) {
          v = r.head_annotation.value;
        }
        for (const auto& l : r.body) {
          if (l.guard) continue;
          const auto it = store.find(ground(l.atom, b));
          if (it == store.end() || it->second < l.threshold - tol) {
            v = 0.0;
            break;
          }
          if (r.head_annotation.kind == narrshift::HeadAnnotation::Kind::copy_body) {
            v = std::min(v, it->second);
          }
        }
        const AtomKey head = ground(r.head, b);
        if (!r.aggregate) {
          derived.emplace_back(head, v);
          return;
        }
        auto& g = groups[head][b.at(r.aggregate->group_variable)];
        g = std::max(g, v);
      };
      assign(0);
      for (const auto& [head, per] : groups) {
        std::vector<double> vals;
        for (const auto& [k, v] : per) vals.push_back(v);
        derived.emplace_back(head, combine(r.aggregate->kind, vals));
      }
    }
    for (const auto& [k, v] : derived) {
      auto [it, inserted] = store.emplace(k, v);
      if (inserted) {
        changed = true;
      } else if (v > it->second) {
        it->second = v;
        changed = true;
      }
    }
  }
  return store;
}

// Random program over small_domain(): up to `max_facts` facts and `max_rules`
// rules, grid annotations and thresholds.
inline LogicProgram random_program(std::mt19937_64& rng, int max_facts = 6, int max_rules = 4) {
  using namespace narrshift;
  const auto& dom = small_domain();
  auto pick = [&](const std::vector<std::string>& v) { return v[rng() % v.size()]; };
  auto level = [&](int lo) { return grid_value(lo + static_cast<int>(rng() % (6 - lo))); };
  const std::vector<Predicate> preds = {Predicate::s_feat, Predicate::c_feat, Predicate::corpus_sim,
                                        Predicate::contains, Predicate::associated};
  const std::map<ArgKind, std::string> var_name = {{ArgKind::story, "S"},
                                                   {ArgKind::chunk, "C"},
                                                   {ArgKind::narrative, "N"},
                                                   {ArgKind::feature, "F"}};
  LogicProgram p;
  const int facts = 1 + static_cast<int>(rng() % max_facts);
  for (int i = 0; i < facts; ++i) {
    const Predicate pr = preds[rng() % preds.size()];
    const auto [k1, k2] = signature(pr);
    p.add_fact(make_atom(pr, pick(dom.at(k1)), pick(dom.at(k2)), level(1)));
  }
  const int rules = 1 + static_cast<int>(rng() % max_rules);
  const bool with_aggregate = rng() % 3 == 0;
  if (with_aggregate) {
    p.rules.push_back(feature_aggregation_rule(static_cast<AggKind>(rng() % 3)));
  }
  std::vector<Predicate> heads = preds;
  if (with_aggregate) heads = {Predicate::s_feat, Predicate::corpus_sim};
  while (static_cast<int>(p.rules.size()) < rules) {
    Rule r;
    std::set<ArgKind> bound;
    const int body = 1 + static_cast<int>(rng() % 2);
    for (int i = 0; i < body; ++i) {
      BodyLiteral l;
      l.atom.predicate = preds[rng() % preds.size()];
      const auto [k1, k2] = signature(l.atom.predicate);
      auto term = [&](ArgKind k) {
        if (rng() % 10 < 7) {
          bound.insert(k);
          return Term::var(var_name.at(k));
        }
        return Term::constant(pick(dom.at(k)));
      };
      l.atom.first = term(k1);
      l.atom.second = term(k2);
      l.threshold = level(0);
      r.body.push_back(l);
    }
    r.head.predicate = heads[rng() % heads.size()];
    const auto [h1, h2] = signature(r.head.predicate);
    auto head_term = [&](ArgKind k) {
      if (bound.count(k) && rng() % 10 < 8) return Term::var(var_name.at(k));
      return Term::constant(pick(dom.at(k)));
    };
    r.head.first = head_term(h1);
    r.head.second = head_term(h2);
    r.head_annotation =
        rng() % 2 ? HeadAnnotation::copy_body() : HeadAnnotation::constant(level(1));
    p.rules.push_back(r);
  }
  return p;
}

// Every k-feature explanation (one chunk per feature), scored through deduce.
struct ExhaustiveResult {
  double best_sigma = 0.0;
  std::size_t explanations = 0;
};

inline double sigma_via_deduce(const LogicProgram& program, const narrshift::Observations& obs,
                               const std::vector<narrshift::Candidate>& e,
                               narrshift::Narrative target) {
  using namespace narrshift;
  const AtomKey key{Predicate::corpus_sim, obs.story_id, std::string(to_code(target))};
  const double before = deduce(program, obs.atoms).get(key);
  auto with = obs.atoms;
  for (const auto& c : e) {
    with.push_back(make_atom(Predicate::c_feat, obs.chunks[c.chunk], feature_constant(c.feature),
                             c.raised));
  }
  return deduce(program, with).get(key) - before;
}

inline ExhaustiveResult exhaustive_best(const LogicProgram& program,
                                        const narrshift::Observations& obs,
                                        const narrshift::Hypothesis& h, narrshift::Narrative target,
                                        std::size_t k) {
  std::map<int, std::vector<narrshift::Candidate>> by_feature;
  for (const auto& c : h.candidates) by_feature[c.feature].push_back(c);
  std::vector<int> features;
  for (const auto& [f, v] : by_feature) features.push_back(f);
  const std::size_t m = std::min(k, features.size());
  ExhaustiveResult out;
  out.best_sigma = -1.0;
  std::vector<narrshift::Candidate> chosen;
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t need) {
    if (need == 0) {
      out.best_sigma = std::max(out.best_sigma, sigma_via_deduce(program, obs, chosen, target));
      ++out.explanations;
      return;
    }
    for (std::size_t i = start; i + need <= features.size(); ++i) {
      for (const auto& c : by_feature[features[i]]) {
        chosen.push_back(c);
        rec(i + 1, need - 1);
        chosen.pop_back();
      }
    }
  };
  rec(0, m);
  return out;
}

// A random story-sized abduction instance: `chunks` chunks, up to `features`
// target features observed on three levels, a random survival table.
struct AbductionInstance {
  narrshift::LogicProgram program;
  narrshift::Observations obs;
  narrshift::Narrative target = narrshift::Narrative::individualistic;
  std::size_t k = 1;
  narrshift::AggKind agg = narrshift::AggKind::mean;
};

inline AbductionInstance random_instance(std::mt19937_64& rng) {
  using namespace narrshift;
  AbductionInstance inst;
  inst.target = rng() % 2 ? Narrative::individualistic : Narrative::collectivistic;
  inst.agg = static_cast<AggKind>(rng() % 3);
  inst.k = 1 + rng() % 3;
  const std::size_t chunks = 1 + rng() % 4;
  const int features = 1 + static_cast<int>(rng() % 6);
  const int base = inst.target == Narrative::individualistic ? 1 : 21;
  const double levels[] = {0.2, 0.6, 1.0};
  inst.obs.story_id = "s";
  for (std::size_t c = 0; c < chunks; ++c) {
    inst.obs.chunks.push_back("s#" + std::to_string(c));
    inst.obs.atoms.push_back(make_atom(Predicate::contains, "s", inst.obs.chunks.back(), 1.0));
  }
  for (std::size_t c = 0; c < chunks; ++c) {
    for (int f = 0; f < features; ++f) {
      if (rng() % 5 == 0) continue;  // some ratings missing
      inst.obs.atoms.push_back(make_atom(Predicate::c_feat, inst.obs.chunks[c],
                                         feature_constant(base + f), levels[rng() % 3]));
    }
  }
  // non-increasing survival fractions with conf(0) = 1
  std::vector<double> story_levels;
  const int n = 2 + static_cast<int>(rng() % 6);
  for (int i = 0; i < n; ++i) story_levels.push_back(grid_value(static_cast<int>(rng() % 6)));
  LearnedRules learned;
  learned.table = confidence_from_levels(story_levels, inst.target, inst.agg);
  learned.rules = learned_rules(learned.table);
  inst.program = story_program(learned, {});
  return inst;
}

}  // namespace oracle
