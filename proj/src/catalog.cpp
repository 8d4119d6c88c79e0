#include "narrshift/catalog.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "narrshift/errors.hpp"
#include "narrshift/logic.hpp"

namespace narrshift {
namespace {

struct Item {
  const char* name;
  const char* question;
};

constexpr Item kIndividualistic[] = {
    {"Protagonist-Centered Focus",
     "Is the narrative driven primarily by one character's experiences, choices, and inner life?"},
    {"Internal Goals",
     "Does the protagonist pursue personal ambitions (e.g., self-actualization, fame, "
     "self-expression) over collective objectives?"},
    {"Decision-Driven Plot",
     "Are key turning points in the story determined by the protagonist's own decisions rather "
     "than group mandates or fate?"},
    {"Self-Reliance",
     "Does the protagonist overcome obstacles through their own resourcefulness rather than "
     "relying on communal support?"},
    {"Individual Accolades",
     "Are awards, status, or recognition attributed primarily to the single protagonist rather "
     "than to a team or ensemble?"},
    {"Meritocracy Emphasis",
     "Is success portrayed as earned by the protagonist's talent, hard work, or innate "
     "brilliance, rather than by lineage or group standing?"},
    {"\"Man vs. Self/World\" Conflict",
     "Is the central struggle internal (e.g., self doubt, identity) or between the protagonist "
     "and external forces, rather than group conflicts?"},
    {"Solo Confrontations",
     "Do climactic showdowns feature the lone protagonist facing the antagonist or obstacle, "
     "rather than a collaborative effort?"},
    {"Inner Journey",
     "Is the character arc centered on the protagonist discovering their own values, strengths, "
     "or purpose?"},
    {"Uniqueness & Self-Expression",
     "Are characters celebrated for what makes them unique (quirks, dreams) or for `being true "
     "to themselves'?"},
    {"Self-Construal",
     "Does the narrative present the self as stable and independent, defined by personal traits "
     "rather than social roles?"},
    {"Behavioral Guidance",
     "Are actions in the story guided by the protagonist's personal attitudes and preferences "
     "rather than social norms or group expectations?"},
    {"Relationship Orientation",
     "Does the story depict relationships as optional and based on mutual benefit rather than "
     "duty and loyalty?"},
    {"Primary Conflict",
     "Is the central conflict about asserting one's individual identity or resisting conformity?"},
    {"Resolution Style",
     "Does the story resolve conflicts by standing up for personal rights and achieving justice "
     "rather than through compromise and reconciliation?"},
    {"Moral Emphasis",
     "Does the narrative emphasize autonomy, personal integrity, or self-actualization as moral "
     "virtues?"},
    {"Relationship Framing",
     "Does the story frame relationships as non-essential, allowing the protagonist to pursue "
     "goals independently?"},
    {"Vertical Individualism",
     "Does the story accept social inequality as a natural consequence of individual "
     "achievement?"},
    {"Personal Ethics over Group Norms",
     "Does the protagonist's personal code or conscience take precedence over cultural or "
     "familial expectations?"},
    {"Self-Actualization Climax",
     "Does the emotional payoff come from the protagonist's personal breakthrough instead of "
     "restoring group harmony?"},
};

constexpr Item kCollectivistic[] = {
    {"Protagonist-Centered Focus",
     "Is the narrative driven primarily by the group's or community's shared experiences, "
     "collective choices, and communal identity?"},
    {"Internal Goals",
     "Do the characters pursue group ambitions (e.g., community well-being, family honor, shared "
     "success) over individual goals?"},
    {"Decision-Driven Plot",
     "Are key turning points in the story determined by collective decisions, group mandates, or "
     "community traditions rather than by a single individual's decision?"},
    {"Self-Reliance",
     "Do the characters overcome obstacles through communal support, collective action, or "
     "shared resources rather than individual effort?"},
    {"Individual Accolades",
     "Are awards, status, or recognition attributed primarily to the group, ensemble, or "
     "community effort rather than to an individual?"},
    {"Meritocracy Emphasis",
     "Is success portrayed as resulting from group support, family lineage, or communal "
     "contributions rather than solely individual talent?"},
    {"\"Man vs. Self/World\" Conflict",
     "Is the central struggle between the group and external forces or within group cohesion, "
     "rather than an individual's internal conflict?"},
    {"Solo Confrontations",
     "Do climactic showdowns feature collaborative group efforts or collective confrontation, "
     "rather than a lone individual?"},
    {"Inner Journey",
     "Is the character arc centered on the group discovering shared values, collective "
     "strengths, or communal purpose?"},
    {"Uniqueness & Self-Expression",
     "Are characters celebrated for conforming to group norms, fulfilling social roles, or "
     "contributing to the collective identity rather than uniqueness?"},
    {"Self-Construal",
     "Does the narrative present the self as interdependent, defined by social roles and "
     "relationships rather than solely personal traits?"},
    {"Behavioral Guidance",
     "Are actions in the story guided by social norms, group expectations, or communal values "
     "rather than personal preferences?"},
    {"Relationship Orientation",
     "Does the story depict relationships as based on duty, loyalty, obligation, and collective "
     "well-being rather than solely mutual benefit?"},
    {"Primary Conflict",
     "Is the central conflict about maintaining social harmony, fulfilling collective roles, or "
     "adhering to group norms rather than asserting individuality?"},
    {"Resolution Style",
     "Does the story resolve conflicts through compromise, reconciliation, and restoring group "
     "harmony rather than individual vindication?"},
    {"Moral Emphasis",
     "Does the narrative emphasize group solidarity, communal responsibility, or collective "
     "welfare as moral virtues?"},
    {"Relationship Framing",
     "Does the story frame relationships as essential, requiring individuals to consider the "
     "impact of their actions on family and community?"},
    {"Vertical Individualism",
     "Does the story emphasize equality, shared prosperity, and collective welfare over social "
     "inequality and individual hierarchy?"},
    {"Personal Ethics over Group Norms",
     "Does adherence to cultural norms, family expectations, or communal codes take precedence "
     "over personal preferences?"},
    {"Self-Actualization Climax",
     "Does the emotional payoff come from restoring group harmony, collective well-being, or "
     "communal success rather than an individual breakthrough?"},
};

std::vector<Feature> builtin_entries() {
  std::vector<Feature> out;
  for (int i = 0; i < FeatureCatalog::kPerNarrative; ++i) {
    out.push_back({i + 1, Narrative::individualistic, kIndividualistic[i].name,
                   kIndividualistic[i].question});
  }
  for (int i = 0; i < FeatureCatalog::kPerNarrative; ++i) {
    out.push_back({i + 21, Narrative::collectivistic, kCollectivistic[i].name,
                   kCollectivistic[i].question});
  }
  return out;
}

}  // namespace

std::string Feature::id() const { return feature_constant(index); }

FeatureCatalog::FeatureCatalog(std::vector<Feature> entries) : entries_(std::move(entries)) {
  if (entries_.size() != 2 * kPerNarrative) throw ConfigError("catalog must hold 40 features");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& f = entries_[i];
    const int expected = static_cast<int>(i) + 1;
    const Narrative n = expected <= kPerNarrative ? Narrative::individualistic
                                                  : Narrative::collectivistic;
    if (f.index != expected || f.narrative != n) {
      throw ConfigError("catalog entry " + std::to_string(expected) + " is out of order");
    }
    if (f.name.empty() || f.question.empty()) {
      throw ConfigError("catalog entry " + std::to_string(expected) + " lacks a name or question");
    }
  }
}

const FeatureCatalog& FeatureCatalog::builtin() {
  static const FeatureCatalog catalog(builtin_entries());
  return catalog;
}

const Feature& FeatureCatalog::at(int index) const {
  if (index < 1 || index > 2 * kPerNarrative) {
    throw LookupError("no feature f" + std::to_string(index));
  }
  return entries_[static_cast<std::size_t>(index - 1)];
}

const Feature& FeatureCatalog::at(const std::string& id) const {
  const auto index = parse_feature_constant(id);
  if (!index) throw LookupError("no feature " + id);
  return at(*index);
}

int FeatureCatalog::dual(int index) const {
  at(index);
  return index <= kPerNarrative ? index + kPerNarrative : index - kPerNarrative;
}

std::vector<int> FeatureCatalog::features_of(Narrative n) const {
  std::vector<int> out;
  const int first = n == Narrative::individualistic ? 1 : kPerNarrative + 1;
  for (int i = first; i < first + kPerNarrative; ++i) out.push_back(i);
  return out;
}

nlohmann::ordered_json FeatureCatalog::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = kVersion;
  auto features = nlohmann::ordered_json::array();
  for (const auto& f : entries_) {
    nlohmann::ordered_json e;
    e["id"] = f.id();
    e["narrative"] = to_string(f.narrative);
    e["dual"] = feature_constant(dual(f.index));
    e["name"] = f.name;
    e["question"] = f.question;
    features.push_back(std::move(e));
  }
  j["features"] = std::move(features);
  return j;
}

FeatureCatalog FeatureCatalog::from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kVersion) throw VersionError("unsupported catalog version");
    std::vector<Feature> entries;
    for (const auto& e : j.at("features")) {
      Feature f;
      const auto index = parse_feature_constant(e.at("id").get<std::string>());
      const auto narrative = parse_narrative(e.at("narrative").get<std::string>());
      if (!index || !narrative) throw ConfigError("bad catalog entry " + e.dump());
      f.index = *index;
      f.narrative = *narrative;
      f.name = e.at("name").get<std::string>();
      f.question = e.at("question").get<std::string>();
      if (e.contains("dual")) {
        const auto d = parse_feature_constant(e["dual"].get<std::string>());
        const int want = f.index <= kPerNarrative ? f.index + kPerNarrative : f.index - kPerNarrative;
        if (!d || *d != want) throw ConfigError("catalog pairing is not f_i <-> f_{i+20}");
      }
      entries.push_back(std::move(f));
    }
    std::sort(entries.begin(), entries.end(),
              [](const Feature& a, const Feature& b) { return a.index < b.index; });
    return FeatureCatalog(std::move(entries));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed catalog: ") + e.what());
  }
}

FeatureCatalog FeatureCatalog::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed catalog: ") + e.what());
  }
  return from_json(j);
}

}  // namespace narrshift
