#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "narrshift/transform.hpp"

namespace narrshift {

inline constexpr double kDefaultAlpha = 1e-5;

// Additively smoothed unigram distribution over a shared vocabulary.
struct TokenDistribution {
  std::vector<std::string> vocabulary;  // sorted
  std::map<std::string, double> probs;
};

TokenDistribution token_distribution(const std::vector<std::string>& tokens,
                                     const std::vector<std::string>& vocabulary, double alpha);

// D_KL(transformed || original) over the union vocabulary, natural log.
// Throws UndefinedMetric when both texts have no tokens.
double kl_divergence(std::string_view transformed, std::string_view original,
                     double alpha = kDefaultAlpha);

// (final - original) / original * 100. Throws PreconditionError for original <= 0.
double improvement(double original_score, double final_score);

struct Prop1Result {
  bool pass = true;
  std::size_t n_c = 0;
  long calls = 0;
};

Prop1Result prop1_check(std::size_t n_c, long transform_calls);
Prop1Result prop1_check(const TransformRun& run);

struct EvalReport {
  std::string story_id;
  Method method = Method::abduction;
  Direction direction = Direction::c_to_i;
  double score_orig = 0.0;
  double score_final = 0.0;
  double improvement_pct = 0.0;
  double kl = 0.0;
  double token_share_pct = 0.0;
  std::size_t n_c = 0;
  long calls = 0;
  bool prop1_pass = true;
};

EvalReport evaluate_run(const TransformRun& run, double alpha = kDefaultAlpha);

// One row per (story, method), sorted by direction, story id and method.
std::string render_csv(std::vector<EvalReport> reports);
// Per (direction, method): counts, mean improvement, median KL and friends.
nlohmann::ordered_json summarize(const std::vector<EvalReport>& reports, double alpha);

// Writes report.csv and summary.json under `dir`. Throws IOError.
void emit_report(const std::vector<EvalReport>& reports, const std::filesystem::path& dir,
                 double alpha = kDefaultAlpha);

}  // namespace narrshift
