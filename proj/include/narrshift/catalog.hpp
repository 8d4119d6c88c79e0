#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "narrshift/narrative.hpp"

namespace narrshift {

struct Feature {
  int index = 0;  // 1..40
  Narrative narrative = Narrative::individualistic;
  std::string name;
  std::string question;

  std::string id() const;  // "f4"
};

// The 40-item narrative diagnostic survey: f1..f20 individualistic,
// f21..f40 their collectivistic duals (f_i <-> f_{i+20}).
class FeatureCatalog {
 public:
  static constexpr int kPerNarrative = 20;
  static constexpr int kVersion = 1;

  static const FeatureCatalog& builtin();
  // Throws ConfigError when the file breaks the 20+20 / pairing invariants.
  static FeatureCatalog load(const std::filesystem::path& path);
  static FeatureCatalog from_json(const nlohmann::json& j);

  explicit FeatureCatalog(std::vector<Feature> entries);

  const std::vector<Feature>& entries() const noexcept { return entries_; }
  const Feature& at(int index) const;
  const Feature& at(const std::string& id) const;
  int dual(int index) const;
  // Feature indices of one narrative, ascending.
  std::vector<int> features_of(Narrative n) const;

  nlohmann::ordered_json to_json() const;

 private:
  std::vector<Feature> entries_;
};

}  // namespace narrshift
