#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "narrshift/catalog.hpp"
#include "narrshift/corpus.hpp"
#include "narrshift/llm_gateway.hpp"
#include "narrshift/logic.hpp"

namespace narrshift {

// raw / 5 on the grid {0.2, ..., 1.0}. Throws RatingError outside 1..5.
Annotation normalize_rating(int raw);

// Lower median: keeps aggregated repeated runs on the integer grid.
int lower_median(std::vector<int> values);
// Ordinary median (mean of the middle pair for even counts).
double median(std::vector<double> values);

struct RatingSample {
  std::string subject;
  int feature = 0;
  int raw = 0;
  int run_index = 0;
};

struct FeatureRating {
  int raw = 0;  // lower median over runs
  bool fallback = false;
  double normalized() const { return raw / 5.0; }
};

struct DiagnosisResult {
  std::string subject;
  std::map<int, FeatureRating> per_feature;
  std::vector<RatingSample> runs;
  std::vector<std::string> warnings;

  // Ordinary median of the 20 aggregated ratings of `n`'s features.
  // Throws LookupError when a feature was not surveyed.
  double story_score(Narrative n) const;
};

// Cache of single survey answers keyed by (text hash, feature, provider, model, run).
class DiagnosisCache {
 public:
  DiagnosisCache() = default;
  explicit DiagnosisCache(std::filesystem::path path);

  static std::string key(std::string_view text, int feature, const std::string& provider,
                         const std::string& model, int run);
  std::optional<int> get(const std::string& key) const;
  void put(const std::string& key, int raw);
  void save() const;
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mutex_;
  std::map<std::string, int> entries_;
};

struct DiagnosisOptions {
  int runs = 10;
  // Re-asks after an unparseable reply before falling back to the neutral rating.
  int parse_retries = 3;
  // Survey all 40 features instead of only the narrative's 20.
  bool full_spectrum = false;
  const FeatureCatalog* catalog = nullptr;  // builtin when null
  DiagnosisCache* cache = nullptr;
  CallLedger* ledger = nullptr;
};

inline constexpr int kNeutralRating = 3;

// Surveys every chunk of `story`. Requests run concurrently up to the
// gateway's in-flight limit; results are merged by chunk/feature/run index.
std::vector<DiagnosisResult> diagnose_chunks(const Story& story, Narrative n, Gateway& gateway,
                                             const DiagnosisOptions& options = {});

// Story-level survey pass over the whole text.
DiagnosisResult diagnose_story(const Story& story, Narrative n, Gateway& gateway,
                               const DiagnosisOptions& options = {});

// contains(s,c) at 1 for every chunk plus one c_feat atom per surveyed
// (chunk, feature). Throws ObservationError when `diag` misses a chunk.
std::vector<GroundAtom> observations(const Story& story, const std::vector<DiagnosisResult>& diag);

// Per-feature max over chunks, then the ordinary median over `n`'s features.
double rollup_story_score(const std::vector<DiagnosisResult>& chunk_diag, Narrative n);

enum class SurveyMode { direct, rollup };
std::string_view to_string(SurveyMode m);
std::optional<SurveyMode> parse_survey_mode(std::string_view text);

// Min/max/median of each feature's samples and of the per-run story score.
nlohmann::ordered_json stability_summary(const DiagnosisResult& result, Narrative n);
nlohmann::ordered_json to_json(const DiagnosisResult& result);

}  // namespace narrshift
