#include "narrshift/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "narrshift/errors.hpp"
#include "narrshift/diagnosis.hpp"
#include "narrshift/text.hpp"

namespace narrshift {

TokenDistribution token_distribution(const std::vector<std::string>& tokens,
                                     const std::vector<std::string>& vocabulary, double alpha) {
  if (!(alpha > 0.0)) throw PreconditionError("smoothing alpha must be positive");
  std::map<std::string, double> counts;
  for (const auto& v : vocabulary) counts[v] = 0.0;
  for (const auto& t : tokens) {
    const auto it = counts.find(t);
    if (it == counts.end()) throw PreconditionError("token '" + t + "' outside the vocabulary");
    it->second += 1.0;
  }
  const double total = static_cast<double>(tokens.size()) + alpha * static_cast<double>(counts.size());
  TokenDistribution d;
  d.vocabulary = vocabulary;
  std::sort(d.vocabulary.begin(), d.vocabulary.end());
  for (const auto& [token, count] : counts) d.probs[token] = (count + alpha) / total;
  return d;
}

double kl_divergence(std::string_view transformed, std::string_view original, double alpha) {
  const auto t = tokenize(transformed);
  const auto o = tokenize(original);
  if (t.empty() && o.empty()) throw UndefinedMetric("KL divergence of two empty texts");
  std::set<std::string> vocab(t.begin(), t.end());
  vocab.insert(o.begin(), o.end());
  const std::vector<std::string> vocabulary(vocab.begin(), vocab.end());
  const auto p = token_distribution(t, vocabulary, alpha);
  const auto q = token_distribution(o, vocabulary, alpha);
  double kl = 0.0;
  for (const auto& x : vocabulary) {
    const double px = p.probs.at(x);
    kl += px * std::log(px / q.probs.at(x));
  }
  // Gibbs: only rounding can push this below zero.
  return std::max(kl, 0.0);
}

double improvement(double original_score, double final_score) {
  if (!(original_score > 0.0)) throw PreconditionError("original score must be positive");
  return (final_score - original_score) / original_score * 100.0;
}

Prop1Result prop1_check(std::size_t n_c, long transform_calls) {
  return {transform_calls >= 0 && static_cast<std::size_t>(transform_calls) <= n_c, n_c,
          transform_calls};
}

Prop1Result prop1_check(const TransformRun& run) {
  return prop1_check(run.n_c, run.ledger.transform_calls);
}

EvalReport evaluate_run(const TransformRun& run, double alpha) {
  if (run.error) throw PreconditionError("run " + run.original.id + " is incomplete: " + *run.error);
  EvalReport r;
  r.story_id = run.original.id;
  r.method = run.method;
  r.direction = direction_to(run.target);
  r.score_orig = run.score_original;
  r.score_final = run.score_final;
  r.improvement_pct = improvement(run.score_original, run.score_final);
  r.kl = kl_divergence(run.final.text, run.original.text, alpha);
  r.token_share_pct = run.token_share;
  const auto p = prop1_check(run);
  r.n_c = p.n_c;
  r.calls = p.calls;
  r.prop1_pass = p.pass;
  return r;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double mean(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
}

}  // namespace

std::string render_csv(std::vector<EvalReport> reports) {
  std::sort(reports.begin(), reports.end(), [](const EvalReport& a, const EvalReport& b) {
    return std::tuple(to_string(a.direction), a.story_id, to_string(a.method)) <
           std::tuple(to_string(b.direction), b.story_id, to_string(b.method));
  });
  std::string out =
      "story_id,method,direction,score_orig,score_final,improvement_pct,kl,token_share_pct,n_c,"
      "calls,prop1_pass\n";
  for (const auto& r : reports) {
    out += csv_field(r.story_id) + "," + std::string(to_string(r.method)) + "," +
           std::string(to_string(r.direction)) + "," + format_fixed(r.score_orig, 2) + "," +
           format_fixed(r.score_final, 2) + "," + format_fixed(r.improvement_pct, 4) + "," +
           format_fixed(r.kl, 8) + "," + format_fixed(r.token_share_pct, 4) + "," +
           std::to_string(r.n_c) + "," + std::to_string(r.calls) + "," +
           (r.prop1_pass ? "true" : "false") + "\n";
  }
  return out;
}

nlohmann::ordered_json summarize(const std::vector<EvalReport>& reports, double alpha) {
  std::map<std::pair<std::string, std::string>, std::vector<const EvalReport*>> groups;
  for (const auto& r : reports) {
    groups[{std::string(to_string(r.direction)), std::string(to_string(r.method))}].push_back(&r);
  }
  nlohmann::ordered_json j;
  j["metadata"] = {{"kl_log_base", "e"}, {"alpha", alpha}, {"vocabulary", "union"}};
  auto rows = nlohmann::ordered_json::array();
  for (const auto& [key, members] : groups) {
    std::vector<double> imp, kl, share, orig, fin;
    bool prop1 = true;
    for (const auto* r : members) {
      imp.push_back(r->improvement_pct);
      kl.push_back(r->kl);
      share.push_back(r->token_share_pct);
      orig.push_back(r->score_orig);
      fin.push_back(r->score_final);
      prop1 = prop1 && r->prop1_pass;
    }
    nlohmann::ordered_json g;
    g["direction"] = key.first;
    g["method"] = key.second;
    g["stories"] = members.size();
    g["mean_improvement_pct"] = mean(imp);
    g["median_kl"] = median(kl);
    g["mean_kl"] = mean(kl);
    g["median_token_share_pct"] = median(share);
    g["median_score_orig"] = median(orig);
    g["median_score_final"] = median(fin);
    g["prop1_all_pass"] = prop1;
    rows.push_back(std::move(g));
  }
  j["groups"] = std::move(rows);
  return j;
}

void emit_report(const std::vector<EvalReport>& reports, const std::filesystem::path& dir,
                 double alpha) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IOError("cannot create " + dir.string() + ": " + ec.message());
  {
    std::ofstream out(dir / "report.csv", std::ios::binary | std::ios::trunc);
    if (!out) throw IOError("cannot write " + (dir / "report.csv").string());
    out << render_csv(reports);
    if (!out) throw IOError("write failed for " + (dir / "report.csv").string());
  }
  std::ofstream out(dir / "summary.json", std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot write " + (dir / "summary.json").string());
  out << summarize(reports, alpha).dump(2) << '\n';
  if (!out) throw IOError("write failed for " + (dir / "summary.json").string());
}

}  // namespace narrshift
