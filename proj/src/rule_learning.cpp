#include "narrshift/rule_learning.hpp"

#include <cstdlib>
#include <ctime>
#include <fstream>

#include <nlohmann/json.hpp>

#include "narrshift/errors.hpp"
#include "narrshift/text.hpp"

namespace narrshift {

ConfidenceTable confidence_from_levels(const std::vector<double>& s_feat, Narrative orientation,
                                       AggKind agg) {
  if (s_feat.empty()) throw LearnError("cannot learn rules from an empty corpus");
  ConfidenceTable t;
  t.orientation = orientation;
  t.corpus_size = s_feat.size();
  t.agg = agg;
  for (int level = 0; level <= 5; ++level) {
    const double mu = grid_value(level);
    std::size_t hits = 0;
    for (double v : s_feat) {
      if (v >= mu - kGridTolerance) ++hits;
    }
    t.conf[static_cast<std::size_t>(level)] =
        static_cast<double>(hits) / static_cast<double>(s_feat.size());
  }
  return t;
}

std::vector<Rule> learned_rules(const ConfidenceTable& table) {
  std::vector<Rule> rules;
  for (int level = 0; level <= 5; ++level) {
    const double c = table.conf[static_cast<std::size_t>(level)];
    if (c <= 0.0) continue;
    const double mu = grid_value(level);
    rules.push_back(corpus_similarity_rule(table.orientation, mu, c * mu));
  }
  return rules;
}

double story_level(const std::string& story_id, const std::vector<GroundAtom>& obs, Narrative n,
                   AggKind agg) {
  LogicProgram p;
  p.add_facts(assoc_facts());
  p.add_facts(obs);
  p.rules.push_back(feature_aggregation_rule(agg));
  const auto closure = deduce(p);
  return closure.get({Predicate::s_feat, story_id, std::string(to_code(n))});
}

LearnedRules learn_rules(const Corpus& corpus, Gateway& gateway, const LearnConfig& cfg) {
  if (corpus.stories.empty()) throw LearnError("cannot learn rules from an empty corpus");
  LearnedRules out;
  for (const auto& story : corpus.stories) {
    const auto diag = diagnose_chunks(story, corpus.orientation, gateway, cfg.diagnosis);
    out.story_levels.push_back(
        story_level(story.id, observations(story, diag), corpus.orientation, cfg.agg));
  }
  out.table = confidence_from_levels(out.story_levels, corpus.orientation, cfg.agg);
  out.rules = learned_rules(out.table);
  out.provenance.corpus_hash = corpus_hash(corpus.stories);
  out.provenance.provider = gateway.config().provider_name();
  out.provenance.model = gateway.config().model;
  out.provenance.agg = cfg.agg;
  out.provenance.timestamp = provenance_timestamp();
  return out;
}

LogicProgram story_program(const LearnedRules& learned, const std::vector<GroundAtom>& obs) {
  if (learned.rules.empty()) throw ConfigError("no learned corpus-similarity rules");
  LogicProgram p;
  p.add_facts(assoc_facts());
  p.add_facts(obs);
  p.rules.push_back(feature_aggregation_rule(learned.table.agg));
  p.rules.insert(p.rules.end(), learned.rules.begin(), learned.rules.end());
  return p;
}

std::string provenance_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch != nullptr && *epoch) {
    char* end = nullptr;
    const long long v = std::strtoll(epoch, &end, 10);
    if (end != nullptr && *end == '\0') t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::ordered_json rules_to_json(const LearnedRules& rules) {
  const auto& t = rules.table;
  nlohmann::ordered_json j;
  j["version"] = kRulesVersion;
  j["orientation"] = to_string(t.orientation);
  nlohmann::ordered_json conf;
  for (int level = 0; level <= 5; ++level) {
    conf[format_level(grid_value(level))] = t.conf[static_cast<std::size_t>(level)];
  }
  j["conf"] = std::move(conf);
  j["agg"] = to_string(t.agg);
  j["corpus_size"] = t.corpus_size;
  nlohmann::ordered_json prov;
  prov["corpus_hash"] = rules.provenance.corpus_hash;
  prov["provider"] = rules.provenance.provider;
  prov["model"] = rules.provenance.model;
  prov["agg"] = to_string(rules.provenance.agg);
  prov["timestamp"] = rules.provenance.timestamp;
  j["provenance"] = std::move(prov);
  auto levels = nlohmann::ordered_json::array();
  for (double v : rules.story_levels) levels.push_back(v);
  j["story_levels"] = std::move(levels);
  auto rs = nlohmann::ordered_json::array();
  for (const auto& r : rules.rules) rs.push_back(nlohmann::ordered_json::parse(rule_to_json(r).dump()));
  j["rules"] = std::move(rs);
  return j;
}

LearnedRules rules_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("version").get<int>();
    if (version != kRulesVersion) {
      throw VersionError("rules file version " + std::to_string(version) + " is not supported");
    }
    LearnedRules out;
    auto& t = out.table;
    const auto orientation = parse_narrative(j.at("orientation").get<std::string>());
    const auto agg = parse_agg(j.at("agg").get<std::string>());
    if (!orientation || !agg) throw ConfigError("rules file has a bad orientation or agg");
    t.orientation = *orientation;
    t.agg = *agg;
    t.corpus_size = j.value("corpus_size", std::size_t{0});
    const auto& conf = j.at("conf");
    for (int level = 0; level <= 5; ++level) {
      const auto key = format_level(grid_value(level));
      const double c = conf.contains(key) ? conf.at(key).get<double>() : 0.0;
      if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("conf(" + key + ") outside [0,1]");
      t.conf[static_cast<std::size_t>(level)] = c;
    }
    out.rules = learned_rules(t);
    const auto& prov = j.at("provenance");
    out.provenance.corpus_hash = prov.value("corpus_hash", "");
    out.provenance.provider = prov.value("provider", "");
    out.provenance.model = prov.value("model", "");
    const auto pagg = parse_agg(prov.value("agg", std::string(to_string(t.agg))));
    out.provenance.agg = pagg ? *pagg : t.agg;
    out.provenance.timestamp = prov.value("timestamp", "");
    if (j.contains("story_levels")) out.story_levels = j["story_levels"].get<std::vector<double>>();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed rules file: ") + e.what());
  }
}

void save_rules(const LearnedRules& rules, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot write " + path.string());
  out << rules_to_json(rules).dump(2) << '\n';
  if (!out) throw IOError("write failed for " + path.string());
}

LearnedRules load_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed rules file: ") + e.what());
  }
  return rules_from_json(j);
}

}  // namespace narrshift
