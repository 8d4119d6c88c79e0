#include "narrshift/diagnosis.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "narrshift/errors.hpp"
#include "narrshift/prompts.hpp"
#include "narrshift/text.hpp"

namespace narrshift {

Annotation normalize_rating(int raw) {
  if (raw < 1 || raw > 5) throw RatingError("rating " + std::to_string(raw) + " outside 1..5");
  return Annotation(raw / 5.0);
}

int lower_median(std::vector<int> values) {
  if (values.empty()) throw LookupError("median of no values");
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

double median(std::vector<double> values) {
  if (values.empty()) throw LookupError("median of no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

double DiagnosisResult::story_score(Narrative n) const {
  std::vector<double> ratings;
  for (int f : FeatureCatalog::builtin().features_of(n)) {
    const auto it = per_feature.find(f);
    if (it == per_feature.end()) {
      throw LookupError(subject + ": feature " + feature_constant(f) + " was not surveyed");
    }
    ratings.push_back(it->second.raw);
  }
  return median(std::move(ratings));
}

DiagnosisCache::DiagnosisCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(*path_);
  if (!in) return;
  try {
    nlohmann::json j;
    in >> j;
    entries_ = j.get<std::map<std::string, int>>();
  } catch (const nlohmann::json::exception& e) {
    throw IOError("corrupt diagnosis cache " + path_->string() + ": " + e.what());
  }
}

std::string DiagnosisCache::key(std::string_view text, int feature, const std::string& provider,
                                const std::string& model, int run) {
  return sha256_hex(text).substr(0, 24) + "|" + feature_constant(feature) + "|" + provider + "|" +
         model + "|" + std::to_string(run);
}

std::optional<int> DiagnosisCache::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void DiagnosisCache::put(const std::string& key, int raw) {
  std::lock_guard lock(mutex_);
  entries_[key] = raw;
}

void DiagnosisCache::save() const {
  if (!path_) return;
  std::lock_guard lock(mutex_);
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
  std::ofstream out(*path_, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot write " + path_->string());
  out << nlohmann::json(entries_).dump(1) << '\n';
}

std::size_t DiagnosisCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

namespace {

struct Subject {
  std::string id;
  std::string text;
};

struct Job {
  std::size_t subject = 0;
  int feature = 0;
  int run = 0;
};

struct Answer {
  int raw = kNeutralRating;
  bool fallback = false;
};

Answer ask(const Subject& s, const Feature& feature, int run, Gateway& gateway,
           const DiagnosisOptions& opt) {
  const auto& cfg = gateway.config();
  std::string cache_key;
  if (opt.cache) {
    cache_key = DiagnosisCache::key(s.text, feature.index, cfg.provider_name(), cfg.model, run);
    if (auto hit = opt.cache->get(cache_key)) return {*hit, false};
  }
  const std::string prompt = render_survey_prompt(s.text, feature);
  for (int attempt = 0; attempt <= opt.parse_retries; ++attempt) {
    const auto reply = gateway.complete(prompt, Purpose::diagnosis, s.id, opt.ledger);
    if (auto raw = parse_rating_reply(reply.text)) {
      if (opt.cache) opt.cache->put(cache_key, *raw);
      return {*raw, false};
    }
  }
  return {kNeutralRating, true};
}

std::vector<DiagnosisResult> survey(const std::vector<Subject>& subjects, Narrative n,
                                    Gateway& gateway, const DiagnosisOptions& opt) {
  if (opt.runs < 1) throw ConfigError("diagnosis needs runs >= 1");
  if (opt.parse_retries < 0) throw ConfigError("parse retries must be >= 0");
  const FeatureCatalog& catalog = opt.catalog ? *opt.catalog : FeatureCatalog::builtin();
  std::vector<int> features = catalog.features_of(n);
  if (opt.full_spectrum) {
    const auto other = catalog.features_of(opposite(n));
    features.insert(features.end(), other.begin(), other.end());
    std::sort(features.begin(), features.end());
  }

  std::vector<Job> jobs;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    for (int f : features) {
      for (int r = 0; r < opt.runs; ++r) jobs.push_back({s, f, r});
    }
  }

  std::vector<Answer> answers(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
      const Job& job = jobs[i];
      try {
        answers[i] = ask(subjects[job.subject], catalog.at(job.feature), job.run, gateway, opt);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto workers =
      std::min<std::size_t>(static_cast<std::size_t>(gateway.max_in_flight()), jobs.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<DiagnosisResult> out(subjects.size());
  std::size_t i = 0;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    auto& res = out[s];
    res.subject = subjects[s].id;
    for (int f : features) {
      std::vector<int> samples;
      bool fallback = false;
      for (int r = 0; r < opt.runs; ++r, ++i) {
        const Answer& a = answers[i];
        samples.push_back(a.raw);
        res.runs.push_back({res.subject, f, a.raw, r});
        if (a.fallback) {
          fallback = true;
          res.warnings.push_back(res.subject + " " + feature_constant(f) + " run " +
                                 std::to_string(r) + ": unparseable reply, using neutral rating");
        }
      }
      res.per_feature[f] = {lower_median(std::move(samples)), fallback};
    }
  }
  return out;
}

}  // namespace

std::vector<DiagnosisResult> diagnose_chunks(const Story& story, Narrative n, Gateway& gateway,
                                             const DiagnosisOptions& options) {
  std::vector<Subject> subjects;
  for (const auto& c : story.chunks) subjects.push_back({c.id, c.text});
  return survey(subjects, n, gateway, options);
}

DiagnosisResult diagnose_story(const Story& story, Narrative n, Gateway& gateway,
                               const DiagnosisOptions& options) {
  return survey({{story.id, story.text}}, n, gateway, options).front();
}

std::vector<GroundAtom> observations(const Story& story, const std::vector<DiagnosisResult>& diag) {
  if (diag.size() != story.chunks.size()) {
    throw ObservationError("diagnosis covers " + std::to_string(diag.size()) + " of " +
                           std::to_string(story.chunks.size()) + " chunks");
  }
  std::vector<GroundAtom> out;
  for (std::size_t i = 0; i < story.chunks.size(); ++i) {
    const auto& chunk = story.chunks[i];
    if (diag[i].subject != chunk.id) {
      throw ObservationError("no diagnosis for chunk " + chunk.id);
    }
    out.push_back(make_atom(Predicate::contains, story.id, chunk.id, 1.0));
  }
  for (std::size_t i = 0; i < story.chunks.size(); ++i) {
    for (const auto& [feature, rating] : diag[i].per_feature) {
      out.push_back(make_atom(Predicate::c_feat, story.chunks[i].id, feature_constant(feature),
                              normalize_rating(rating.raw).lower()));
    }
  }
  return out;
}

double rollup_story_score(const std::vector<DiagnosisResult>& chunk_diag, Narrative n) {
  if (chunk_diag.empty()) throw DegenerateStory("no chunk diagnoses to roll up");
  std::vector<double> ratings;
  for (int f : FeatureCatalog::builtin().features_of(n)) {
    int best = 0;
    for (const auto& d : chunk_diag) {
      const auto it = d.per_feature.find(f);
      if (it == d.per_feature.end()) {
        throw LookupError(d.subject + ": feature " + feature_constant(f) + " was not surveyed");
      }
      best = std::max(best, it->second.raw);
    }
    ratings.push_back(best);
  }
  return median(std::move(ratings));
}

std::string_view to_string(SurveyMode m) { return m == SurveyMode::direct ? "direct" : "rollup"; }

std::optional<SurveyMode> parse_survey_mode(std::string_view text) {
  if (text == "direct") return SurveyMode::direct;
  if (text == "rollup") return SurveyMode::rollup;
  return std::nullopt;
}

nlohmann::ordered_json stability_summary(const DiagnosisResult& result, Narrative n) {
  std::map<int, std::vector<int>> by_feature;
  std::map<int, std::vector<double>> by_run;
  const auto wanted = FeatureCatalog::builtin().features_of(n);
  for (const auto& s : result.runs) {
    by_feature[s.feature].push_back(s.raw);
    if (std::find(wanted.begin(), wanted.end(), s.feature) != wanted.end()) {
      by_run[s.run_index].push_back(s.raw);
    }
  }
  nlohmann::ordered_json j;
  auto features = nlohmann::ordered_json::object();
  for (const auto& [f, samples] : by_feature) {
    const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
    features[feature_constant(f)] = {{"min", *lo}, {"max", *hi}, {"median", lower_median(samples)}};
  }
  std::vector<double> run_scores;
  for (auto& [run, ratings] : by_run) run_scores.push_back(median(ratings));
  if (!run_scores.empty()) {
    const auto [lo, hi] = std::minmax_element(run_scores.begin(), run_scores.end());
    j["story_score"] = {{"min", *lo}, {"max", *hi}, {"median", median(run_scores)}};
  }
  j["runs"] = by_run.size();
  j["features"] = std::move(features);
  return j;
}

nlohmann::ordered_json to_json(const DiagnosisResult& result) {
  nlohmann::ordered_json j;
  j["subject"] = result.subject;
  auto features = nlohmann::ordered_json::object();
  for (const auto& [f, r] : result.per_feature) {
    nlohmann::ordered_json e;
    e["raw"] = r.raw;
    e["annotation"] = r.normalized();
    if (r.fallback) e["fallback"] = true;
    features[feature_constant(f)] = std::move(e);
  }
  j["features"] = std::move(features);
  if (!result.warnings.empty()) j["warnings"] = result.warnings;
  return j;
}

}  // namespace narrshift
