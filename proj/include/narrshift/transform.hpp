#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "narrshift/abduction.hpp"
#include "narrshift/corpus.hpp"
#include "narrshift/diagnosis.hpp"
#include "narrshift/llm_gateway.hpp"
#include "narrshift/prompts.hpp"
#include "narrshift/rule_learning.hpp"

namespace narrshift {

inline constexpr int kRunVersion = 1;

struct TransformOptions {
  PromptMode prompt = PromptMode::steered;
  ChunkingConfig chunking;
  // Replies that drop more than this share of the story's tokens are rejected.
  double max_deletion = 0.8;
  CallLedger* ledger = nullptr;
};

// Rewrites chunk `chunk` of `story` toward `feature` with the segment prompt.
// Only the selected chunk can change: the reply is aligned against the story
// and its rewritten segment is spliced into the chunk slot.
// Throws PreconditionError (tau <= observed or tau > 1), RejectedRewrite and
// TransformError (gateway failure).
Story llm_transform(const Story& story, std::size_t chunk, int feature, double tau, double observed,
                    Narrative target, Gateway& gateway, const TransformOptions& options = {});

// The rewritten segment found in `reply`, or nullopt when it cannot be located.
std::optional<std::string> locate_segment(const Story& story, std::size_t chunk,
                                          std::string_view reply, const ChunkingConfig& cfg);

// Zero-shot baseline: one call, the reply becomes the new story.
Story baseline_transform(const Story& story, Narrative target, Gateway& gateway,
                         const TransformOptions& options = {});

struct RewriteRecord {
  std::size_t chunk = 0;
  int feature = 0;
  double tau = 1.0;
  double observed = 0.0;
  std::size_t tokens = 0;  // size of the chunk handed to the rewrite
  std::string before;
  std::string after;
  bool rejected = false;
  std::string note;
};

struct IterationRecord {
  int t = 0;
  Story story;
  // Aggregated raw rating per chunk and feature.
  std::vector<std::map<int, int>> ratings;
  std::optional<Explanation> explanation;
  std::vector<RewriteRecord> rewrites;
  double story_score = 0.0;
  LedgerTotals calls;
  std::string stop;  // why the loop ended here, if it did
};

enum class Method { abduction, baseline };
std::string_view to_string(Method m);
std::optional<Method> parse_method(std::string_view text);

struct TransformRun {
  Method method = Method::abduction;
  Narrative target = Narrative::individualistic;
  Story original;
  Story final;
  std::vector<IterationRecord> iterations;
  std::optional<int> selected_iteration;
  double score_original = 0.0;
  double score_final = 0.0;
  SurveyMode score_mode = SurveyMode::direct;
  LedgerTotals ledger;
  // Sum of the sizes of all abduced chunks at the time of their rewrite.
  std::size_t n_c = 0;
  // Share of the original tokens that were ever handed to the rewriter.
  double token_share = 0.0;
  std::map<std::string, std::string> settings;
  std::optional<std::string> error;
};

struct IterativeConfig {
  int t_max = 3;
  std::size_t k = 2;
  bool all_levels = false;
  SurveyMode score_mode = SurveyMode::direct;
  DiagnosisOptions diagnosis;
  TransformOptions transform;
};

// Default feature budget: 2 toward individualism, 3 toward collectivism.
std::size_t default_k(Narrative target);

// Diagnose, abduce, rewrite the abduced chunks in order; repeat up to t_max
// rounds, stopping early on an empty explanation. The original story and
// the last rewrite are both candidates for the selected iteration. Pipeline
// errors stop the loop and are recorded in `error`.
TransformRun run_iterative(const Story& story, Narrative target, const LearnedRules& rules,
                           Gateway& gateway, const IterativeConfig& cfg = {});

TransformRun run_baseline(const Story& story, Narrative target, Gateway& gateway,
                          const IterativeConfig& cfg = {});

// argmax of the recorded story scores, ties to the earliest iteration.
int select_iteration(const std::vector<IterationRecord>& iterations);

nlohmann::ordered_json to_json(const TransformRun& run);
TransformRun transform_run_from_json(const nlohmann::json& j);
void save_run(const TransformRun& run, const std::filesystem::path& path);
TransformRun load_run(const std::filesystem::path& path);

nlohmann::ordered_json story_to_json(const Story& s);
Story story_from_json(const nlohmann::json& j);

}  // namespace narrshift
