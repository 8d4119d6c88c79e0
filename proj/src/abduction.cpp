#include "narrshift/abduction.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "narrshift/catalog.hpp"
#include "narrshift/errors.hpp"
#include "narrshift/text.hpp"

namespace narrshift {

Observations Observations::from(const Story& story, std::vector<GroundAtom> atoms) {
  Observations o;
  o.story_id = story.id;
  for (const auto& c : story.chunks) o.chunks.push_back(c.id);
  o.atoms = std::move(atoms);
  return o;
}

std::optional<double> Observations::c_feat(std::size_t chunk, int feature) const {
  if (chunk >= chunks.size()) return std::nullopt;
  const AtomKey key{Predicate::c_feat, chunks[chunk], feature_constant(feature)};
  std::optional<double> out;
  for (const auto& a : atoms) {
    if (a.key == key) out = std::max(out.value_or(0.0), a.annotation.lower());
  }
  return out;
}

namespace {

// Observed level per (chunk, feature) of the target narrative.
std::map<std::pair<std::size_t, int>, int> observed_levels(const Observations& obs,
                                                           Narrative target) {
  std::map<std::string, std::size_t> chunk_index;
  for (std::size_t i = 0; i < obs.chunks.size(); ++i) chunk_index[obs.chunks[i]] = i;
  const auto features = FeatureCatalog::builtin().features_of(target);
  std::map<std::pair<std::size_t, int>, int> out;
  for (const auto& a : obs.atoms) {
    if (a.key.predicate != Predicate::c_feat) continue;
    const auto c = chunk_index.find(a.key.first);
    const auto f = parse_feature_constant(a.key.second);
    if (c == chunk_index.end() || !f) continue;
    if (std::find(features.begin(), features.end(), *f) == features.end()) continue;
    auto& slot = out[{c->second, *f}];
    slot = std::max(slot, to_grid_index(a.annotation.lower()));
  }
  return out;
}

AggKind program_agg(const LogicProgram& program) {
  for (const auto& r : program.rules) {
    if (r.aggregate && r.head.predicate == Predicate::s_feat) return r.aggregate->kind;
  }
  throw ConfigError("program lacks the chunk-to-story aggregation rule");
}

void require_similarity_rules(const LogicProgram& program, Narrative target) {
  const std::string code(to_code(target));
  for (const auto& r : program.rules) {
    if (r.head.predicate == Predicate::corpus_sim &&
        (r.head.second.variable || r.head.second.name == code)) {
      return;
    }
  }
  throw ConfigError("no learned corpus-similarity rules for " + std::string(to_string(target)));
}

struct Values {
  double s_feat = 0.0;
  double corpus_sim = 0.0;
};

Values evaluate(const LogicProgram& program, const Observations& obs,
                const std::vector<Candidate>& e, Narrative target) {
  auto facts = obs.atoms;
  const auto extra = to_ground_atoms(obs, e);
  facts.insert(facts.end(), extra.begin(), extra.end());
  const auto closure = deduce(program, facts);
  const std::string code(to_code(target));
  return {closure.get({Predicate::s_feat, obs.story_id, code}),
          closure.get({Predicate::corpus_sim, obs.story_id, code})};
}

// AGG over integer levels, scaled so that comparisons stay exact.
long scaled_aggregate(AggKind agg, std::vector<int> levels) {
  if (levels.empty()) return 0;
  switch (agg) {
    case AggKind::mean: {
      long sum = 0;
      for (int l : levels) sum += l;
      return sum;
    }
    case AggKind::max:
      return *std::max_element(levels.begin(), levels.end());
    case AggKind::median: {
      std::sort(levels.begin(), levels.end());
      const std::size_t n = levels.size();
      return n % 2 == 1 ? 2L * levels[n / 2] : static_cast<long>(levels[n / 2 - 1]) + levels[n / 2];
    }
  }
  return 0;
}

struct Option {
  Candidate candidate;
  int delta = 0;  // rise of the feature's story rating, in levels
  int gain = 0;   // mu' - mu, in levels
};

using Pairs = std::vector<std::pair<std::size_t, int>>;

struct Choice {
  long score = -1;
  long gain = 0;
  Pairs pairs;
  std::vector<Candidate> atoms;

  bool better_than(const Choice& o) const {
    if (score != o.score) return score > o.score;
    if (gain != o.gain) return gain > o.gain;
    return pairs < o.pairs;
  }
};

Choice make_choice(const std::vector<const Option*>& picked, AggKind agg,
                   const std::map<int, int>& rho) {
  Choice c;
  std::map<int, int> after = rho;
  for (const Option* o : picked) {
    auto& level = after[o->candidate.feature];
    level = std::max(level, to_grid_index(o->candidate.raised));
    c.gain += o->gain;
    c.pairs.emplace_back(o->candidate.chunk, o->candidate.feature);
    c.atoms.push_back(o->candidate);
  }
  std::vector<int> levels;
  for (const auto& [f, l] : after) levels.push_back(l);
  c.score = scaled_aggregate(agg, std::move(levels));
  std::sort(c.pairs.begin(), c.pairs.end());
  std::sort(c.atoms.begin(), c.atoms.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.chunk, a.feature) < std::tie(b.chunk, b.feature);
  });
  return c;
}

bool option_before(const Option& a, const Option& b) {
  if (a.delta != b.delta) return a.delta > b.delta;
  if (a.gain != b.gain) return a.gain > b.gain;
  return std::tie(a.candidate.chunk, a.candidate.feature) <
         std::tie(b.candidate.chunk, b.candidate.feature);
}

}  // namespace

Hypothesis build_hypothesis(const Observations& obs, Narrative target, bool all_levels) {
  Hypothesis h;
  for (const auto& [key, level] : observed_levels(obs, target)) {
    if (level >= 5) continue;
    for (int raised = all_levels ? level + 1 : 5; raised <= 5; ++raised) {
      h.candidates.push_back({key.first, key.second, grid_value(level), grid_value(raised)});
    }
  }
  return h;
}

std::vector<GroundAtom> to_ground_atoms(const Observations& obs, const std::vector<Candidate>& e) {
  std::vector<GroundAtom> out;
  for (const auto& c : e) {
    if (c.chunk >= obs.chunks.size()) throw LookupError("candidate chunk out of range");
    out.push_back(make_atom(Predicate::c_feat, obs.chunks[c.chunk], feature_constant(c.feature),
                            c.raised));
  }
  return out;
}

double parsimony(const LogicProgram& program, const Observations& obs,
                 const std::vector<Candidate>& e, Narrative target) {
  require_similarity_rules(program, target);
  if (e.empty()) return 0.0;
  return evaluate(program, obs, e, target).corpus_sim - evaluate(program, obs, {}, target).corpus_sim;
}

std::vector<GroundAtom> Explanation::ground_atoms() const {
  std::vector<GroundAtom> out;
  for (const auto& a : atoms) {
    out.push_back(make_atom(Predicate::c_feat, a.chunk_id, feature_constant(a.candidate.feature),
                            a.candidate.raised));
  }
  return out;
}

std::vector<std::size_t> Explanation::chunks() const {
  std::set<std::size_t> s;
  for (const auto& a : atoms) s.insert(a.candidate.chunk);
  return {s.begin(), s.end()};
}

Explanation solve(const LogicProgram& program, const Observations& obs, Narrative target,
                  std::size_t k, const SolveOptions& options) {
  if (k < 1) throw PreconditionError("feature budget k must be >= 1");
  require_similarity_rules(program, target);
  const AggKind agg = program_agg(program);
  const Hypothesis h = build_hypothesis(obs, target, options.all_levels);
  if (h.candidates.empty()) {
    throw EmptyExplanation("story " + obs.story_id + " has no raisable " +
                           std::string(to_string(target)) + " feature");
  }

  // Story rating per target feature: max over chunks, absent = 0.
  std::map<int, int> rho;
  for (int f : FeatureCatalog::builtin().features_of(target)) rho[f] = 0;
  for (const auto& [key, level] : observed_levels(obs, target)) {
    rho[key.second] = std::max(rho[key.second], level);
  }

  // Per feature, the best option for each reachable rise.
  std::map<int, std::vector<Option>> by_feature;
  for (const auto& c : h.candidates) {
    const int r = rho[c.feature];
    Option o{c, std::max(r, to_grid_index(c.raised)) - r,
             to_grid_index(c.raised) - to_grid_index(c.observed)};
    by_feature[c.feature].push_back(o);
  }
  for (auto& [f, opts] : by_feature) {
    std::sort(opts.begin(), opts.end(), option_before);
    std::vector<Option> front;
    for (const auto& o : opts) {
      if (front.empty() || o.delta < front.back().delta) front.push_back(o);
    }
    opts = std::move(front);
  }

  std::vector<int> features;
  for (const auto& [f, opts] : by_feature) features.push_back(f);
  const std::size_t m = std::min(k, features.size());

  Choice best;
  if (agg == AggKind::mean) {
    // Separable: each feature adds its own rise, so take the k best features.
    std::vector<const Option*> tops;
    for (int f : features) tops.push_back(&by_feature[f].front());
    std::sort(tops.begin(), tops.end(),
              [](const Option* a, const Option* b) { return option_before(*a, *b); });
    tops.resize(m);
    best = make_choice(tops, agg, rho);
  } else {
    // Enumerate feature subsets and each feature's options.
    std::vector<std::size_t> idx(m);
    for (std::size_t i = 0; i < m; ++i) idx[i] = i;
    while (true) {
      std::vector<std::size_t> pick(m, 0);
      while (true) {
        std::vector<const Option*> chosen;
        for (std::size_t i = 0; i < m; ++i) chosen.push_back(&by_feature[features[idx[i]]][pick[i]]);
        auto c = make_choice(chosen, agg, rho);
        if (best.score < 0 || c.better_than(best)) best = std::move(c);
        std::size_t d = 0;
        while (d < m && ++pick[d] == by_feature[features[idx[d]]].size()) pick[d++] = 0;
        if (d == m) break;
      }
      std::size_t i = m;
      while (i > 0 && idx[i - 1] == features.size() - m + (i - 1)) --i;
      if (i == 0) break;
      ++idx[i - 1];
      for (std::size_t j = i; j < m; ++j) idx[j] = idx[j - 1] + 1;
    }
  }

  Explanation e;
  const auto before = evaluate(program, obs, {}, target);
  const auto after = evaluate(program, obs, best.atoms, target);
  e.s_feat_before = before.s_feat;
  e.s_feat_after = after.s_feat;
  e.score = after.corpus_sim - before.corpus_sim;
  e.feature_count = best.atoms.size();
  for (std::size_t i = 0; i < best.atoms.size(); ++i) {
    auto rest = best.atoms;
    rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(i));
    const double without = evaluate(program, obs, rest, target).corpus_sim;
    e.atoms.push_back({best.atoms[i], obs.chunks[best.atoms[i].chunk], after.corpus_sim - without});
  }
  return e;
}

std::pair<int, double> extract_feature(const Explanation& e, std::size_t chunk) {
  const ExplanationAtom* pick = nullptr;
  for (const auto& a : e.atoms) {
    if (a.candidate.chunk != chunk) continue;
    if (pick == nullptr || a.marginal > pick->marginal + kGridTolerance ||
        (std::abs(a.marginal - pick->marginal) <= kGridTolerance &&
         a.candidate.feature < pick->candidate.feature)) {
      pick = &a;
    }
  }
  if (pick == nullptr) throw LookupError("chunk " + std::to_string(chunk) + " is not in the explanation");
  return {pick->candidate.feature, pick->candidate.raised};
}

nlohmann::ordered_json to_json(const Explanation& e, const Story& story) {
  nlohmann::ordered_json j;
  j["score"] = e.score;
  j["s_feat_before"] = e.s_feat_before;
  j["s_feat_after"] = e.s_feat_after;
  j["feature_count"] = e.feature_count;
  auto atoms = nlohmann::ordered_json::array();
  for (const auto& a : e.atoms) {
    const auto& feature = FeatureCatalog::builtin().at(a.candidate.feature);
    nlohmann::ordered_json x;
    x["chunk_id"] = a.chunk_id;
    x["chunk_index"] = a.candidate.chunk;
    std::string excerpt;
    if (a.candidate.chunk < story.chunks.size()) {
      excerpt = story.chunks[a.candidate.chunk].text;
      if (excerpt.size() > 80) {
        std::size_t cut = 80;
        while (cut > 0 && (static_cast<unsigned char>(excerpt[cut]) & 0xC0) == 0x80) --cut;
        excerpt = excerpt.substr(0, cut) + "...";
      }
    }
    x["excerpt"] = excerpt;
    x["feature"] = feature.id();
    x["feature_name"] = feature.name;
    x["observed"] = a.candidate.observed;
    x["target"] = a.candidate.raised;
    x["marginal"] = a.marginal;
    atoms.push_back(std::move(x));
  }
  j["atoms"] = std::move(atoms);
  return j;
}

}  // namespace narrshift
