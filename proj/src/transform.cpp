#include "narrshift/transform.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "narrshift/errors.hpp"
#include "narrshift/catalog.hpp"
#include "narrshift/text.hpp"

namespace narrshift {
namespace {

std::string_view ltrim(std::string_view s) {
  const auto t = trim(s);
  return t.empty() ? t : s.substr(static_cast<std::size_t>(t.data() - s.data()));
}

std::string_view rtrim(std::string_view s) {
  const auto t = trim(s);
  return t.empty() ? t : s.substr(0, static_cast<std::size_t>(t.data() - s.data()) + t.size());
}

// Byte offset of each chunk in the story text.
std::vector<std::size_t> chunk_offsets(const Story& s) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < s.chunks.size(); ++i) {
    pos += s.gaps[i].size();
    out.push_back(pos);
    pos += s.chunks[i].text.size();
  }
  return out;
}

LedgerTotals minus(const LedgerTotals& a, const LedgerTotals& b) {
  LedgerTotals d;
  d.diagnosis_calls = a.diagnosis_calls - b.diagnosis_calls;
  d.transform_calls = a.transform_calls - b.transform_calls;
  d.prompt_tokens = a.prompt_tokens - b.prompt_tokens;
  d.completion_tokens = a.completion_tokens - b.completion_tokens;
  d.retries = a.retries - b.retries;
  d.failures = a.failures - b.failures;
  d.estimated_tokens = a.estimated_tokens;
  return d;
}

double score_story(const Story& s, Narrative target, Gateway& gateway, const DiagnosisOptions& opt,
                   SurveyMode mode) {
  if (mode == SurveyMode::direct) return diagnose_story(s, target, gateway, opt).story_score(target);
  return rollup_story_score(diagnose_chunks(s, target, gateway, opt), target);
}

}  // namespace

std::optional<std::string> locate_segment(const Story& story, std::size_t chunk,
                                          std::string_view reply, const ChunkingConfig& cfg) {
  const std::size_t n = story.chunks.size();
  if (chunk >= n) throw LookupError("chunk index out of range");

  std::string prefix, suffix;
  for (std::size_t j = 0; j < chunk; ++j) prefix += story.gaps[j] + story.chunks[j].text;
  prefix += story.gaps[chunk];
  suffix = story.gaps[chunk + 1];
  for (std::size_t j = chunk + 1; j < n; ++j) suffix += story.chunks[j].text + story.gaps[j + 1];

  const auto p = ltrim(prefix);
  const auto s = rtrim(suffix);
  const auto r = trim(reply);
  if (r.size() >= p.size() + s.size() && r.substr(0, p.size()) == p &&
      r.substr(r.size() - s.size()) == s) {
    return std::string(trim(r.substr(p.size(), r.size() - p.size() - s.size())));
  }

  // The reply touched the surroundings: re-chunk it and align chunk by chunk.
  Story rs;
  try {
    rs = make_story("reply", std::string(reply), std::nullopt, cfg);
  } catch (const EmptyStory&) {
    return std::nullopt;
  }
  const std::size_t m = rs.chunks.size();
  if (m == n) return rs.chunks[chunk].text;

  std::size_t head = 0;
  while (head < std::min(m, chunk) && rs.chunks[head].text == story.chunks[head].text) ++head;
  std::size_t tail = 0;
  while (tail < std::min(m - head, n - 1 - chunk) &&
         rs.chunks[m - 1 - tail].text == story.chunks[n - 1 - tail].text) {
    ++tail;
  }
  if (head != chunk || tail != n - 1 - chunk) return std::nullopt;
  if (m - tail <= head) return std::string();
  const auto offsets = chunk_offsets(rs);
  const std::size_t begin = offsets[head];
  const std::size_t end = offsets[m - tail - 1] + rs.chunks[m - tail - 1].text.size();
  return rs.text.substr(begin, end - begin);
}

Story llm_transform(const Story& story, std::size_t chunk, int feature, double tau, double observed,
                    Narrative target, Gateway& gateway, const TransformOptions& options) {
  if (chunk >= story.chunks.size()) throw LookupError("chunk index out of range");
  if (!(tau > observed + kGridTolerance) || tau > 1.0 + kGridTolerance) {
    throw PreconditionError("target annotation " + format_fixed(tau, 2) +
                            " must lie above the observed " + format_fixed(observed, 2) +
                            " and at most 1");
  }
  const Feature& f = FeatureCatalog::builtin().at(feature);
  const auto& selected = story.chunks[chunk];
  const std::string prompt =
      render_transform_prompt(story.text, selected.text, target, &f, options.prompt);

  std::string reply;
  try {
    reply = gateway.complete({ChatMessage{"system", prompt}}, Purpose::transform, selected.id,
                             options.ledger)
                .text;
  } catch (const GatewayError& e) {
    throw TransformError(std::string("rewrite of ") + selected.id + " failed: " + e.what());
  }

  const double before = static_cast<double>(story.total_tokens());
  const double after = static_cast<double>(count_tokens(reply));
  if (before - after > options.max_deletion * before) {
    throw RejectedRewrite("reply for " + selected.id + " deletes more than " +
                          format_fixed(options.max_deletion * 100.0, 0) + "% of the story");
  }
  const auto segment = locate_segment(story, chunk, reply, options.chunking);
  if (!segment) throw RejectedRewrite("cannot locate the rewritten segment of " + selected.id);
  if (is_blank(*segment) || count_tokens(*segment) == 0) {
    throw RejectedRewrite("rewritten segment of " + selected.id + " is empty");
  }

  Story out = story.with_chunk_text(chunk, *segment);
  for (std::size_t j = 0; j < story.chunks.size(); ++j) {
    if (j != chunk && out.chunks[j].text != story.chunks[j].text) {
      throw InvariantError("splice-guard: chunk " + story.chunks[j].id + " changed");
    }
  }
  return out;
}

Story baseline_transform(const Story& story, Narrative target, Gateway& gateway,
                         const TransformOptions& options) {
  std::vector<ChatMessage> messages = {{"system", baseline_instruction(target)},
                                       {"user", story.text}};
  std::string reply;
  try {
    reply = gateway.complete(std::move(messages), Purpose::transform, story.id, options.ledger).text;
  } catch (const GatewayError& e) {
    throw TransformError(std::string("baseline rewrite of ") + story.id + " failed: " + e.what());
  }
  try {
    return make_story(story.id, reply, story.label, options.chunking);
  } catch (const EmptyStory&) {
    throw TransformError("baseline reply for " + story.id + " is empty");
  }
}

std::string_view to_string(Method m) { return m == Method::abduction ? "abduction" : "baseline"; }

std::optional<Method> parse_method(std::string_view text) {
  if (text == "abduction") return Method::abduction;
  if (text == "baseline") return Method::baseline;
  return std::nullopt;
}

std::size_t default_k(Narrative target) { return target == Narrative::individualistic ? 2 : 3; }

int select_iteration(const std::vector<IterationRecord>& iterations) {
  if (iterations.empty()) throw LookupError("no iterations to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < iterations.size(); ++i) {
    if (iterations[i].story_score > iterations[best].story_score) best = i;
  }
  return iterations[best].t;
}

TransformRun run_iterative(const Story& story, Narrative target, const LearnedRules& rules,
                           Gateway& gateway, const IterativeConfig& cfg) {
  if (cfg.t_max < 1) throw PreconditionError("T_max must be >= 1");
  if (cfg.k < 1) throw PreconditionError("k must be >= 1");
  if (rules.table.orientation != target) {
    throw ConfigError("rules were learned for " + std::string(to_string(rules.table.orientation)) +
                      " but the target is " + std::string(to_string(target)));
  }
  TransformRun run;
  run.method = Method::abduction;
  run.target = target;
  run.original = story;
  run.final = story;
  run.score_mode = cfg.score_mode;
  run.settings["k"] = std::to_string(cfg.k);
  run.settings["t_max"] = std::to_string(cfg.t_max);
  run.settings["agg"] = std::string(to_string(rules.table.agg));
  run.settings["prompt"] = std::string(to_string(cfg.transform.prompt));
  run.settings["candidates"] = cfg.all_levels ? "grid" : "top";

  CallLedger ledger;
  DiagnosisOptions diag_opt = cfg.diagnosis;
  diag_opt.ledger = &ledger;
  TransformOptions tr_opt = cfg.transform;
  tr_opt.ledger = &ledger;
  const LogicProgram program = story_program(rules, {});

  std::set<std::size_t> touched;
  Story s = story;
  try {
    for (int t = 0; t <= cfg.t_max; ++t) {
      const auto before = ledger.totals();
      IterationRecord rec;
      rec.t = t;
      rec.story = s;
      const auto diag = diagnose_chunks(s, target, gateway, diag_opt);
      for (const auto& d : diag) {
        std::map<int, int> r;
        for (const auto& [f, rating] : d.per_feature) r[f] = rating.raw;
        rec.ratings.push_back(std::move(r));
      }
      rec.story_score = rollup_story_score(diag, target);
      if (t == cfg.t_max) {
        rec.stop = "round limit";
        rec.calls = minus(ledger.totals(), before);
        run.iterations.push_back(std::move(rec));
        break;
      }
      const auto obs = Observations::from(s, observations(s, diag));
      Explanation e;
      try {
        e = solve(program, obs, target, cfg.k, {cfg.all_levels});
      } catch (const EmptyExplanation&) {
        rec.stop = "empty explanation";
        rec.calls = minus(ledger.totals(), before);
        run.iterations.push_back(std::move(rec));
        break;
      }
      Story next = s;
      for (std::size_t c : e.chunks()) {
        const auto [feature, tau] = extract_feature(e, c);
        RewriteRecord rw;
        rw.chunk = c;
        rw.feature = feature;
        rw.tau = tau;
        rw.observed = obs.c_feat(c, feature).value_or(0.0);
        rw.tokens = next.chunks[c].token_count;
        rw.before = next.chunks[c].text;
        touched.insert(c);
        run.n_c += rw.tokens;
        try {
          next = llm_transform(next, c, feature, tau, rw.observed, target, gateway, tr_opt);
          rw.after = next.chunks[c].text;
        } catch (const RejectedRewrite& err) {
          rw.rejected = true;
          rw.note = err.what();
          rw.after = rw.before;
        }
        rec.rewrites.push_back(std::move(rw));
      }
      rec.explanation = std::move(e);
      rec.calls = minus(ledger.totals(), before);
      run.iterations.push_back(std::move(rec));
      s = std::move(next);
    }
  } catch (const Error& err) {
    run.error = err.what();
  }

  if (!run.iterations.empty()) {
    run.selected_iteration = select_iteration(run.iterations);
    run.final = run.iterations[static_cast<std::size_t>(*run.selected_iteration)].story;
  }
  std::size_t share = 0;
  for (std::size_t c : touched) share += story.chunks[c].token_count;
  run.token_share = story.total_tokens() == 0
                        ? 0.0
                        : 100.0 * static_cast<double>(share) / static_cast<double>(story.total_tokens());

  if (!run.error) {
    try {
      if (cfg.score_mode == SurveyMode::rollup) {
        run.score_original = run.iterations.front().story_score;
        run.score_final = run.iterations[static_cast<std::size_t>(*run.selected_iteration)].story_score;
      } else {
        run.score_original = score_story(story, target, gateway, diag_opt, cfg.score_mode);
        run.score_final = run.final.text == story.text
                              ? run.score_original
                              : score_story(run.final, target, gateway, diag_opt, cfg.score_mode);
      }
    } catch (const Error& err) {
      run.error = err.what();
    }
  }
  run.ledger = ledger.totals();
  return run;
}

TransformRun run_baseline(const Story& story, Narrative target, Gateway& gateway,
                          const IterativeConfig& cfg) {
  TransformRun run;
  run.method = Method::baseline;
  run.target = target;
  run.original = story;
  run.final = story;
  run.score_mode = cfg.score_mode;
  CallLedger ledger;
  DiagnosisOptions diag_opt = cfg.diagnosis;
  diag_opt.ledger = &ledger;
  TransformOptions tr_opt = cfg.transform;
  tr_opt.ledger = &ledger;
  try {
    run.final = baseline_transform(story, target, gateway, tr_opt);
    run.n_c = story.total_tokens();
    run.token_share = 100.0;
    run.score_original = score_story(story, target, gateway, diag_opt, cfg.score_mode);
    run.score_final = run.final.text == story.text
                          ? run.score_original
                          : score_story(run.final, target, gateway, diag_opt, cfg.score_mode);
  } catch (const Error& err) {
    run.error = err.what();
  }
  run.ledger = ledger.totals();
  return run;
}

nlohmann::ordered_json story_to_json(const Story& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["text"] = s.text;
  if (s.label) j["label"] = to_string(*s.label);
  auto chunks = nlohmann::ordered_json::array();
  for (const auto& c : s.chunks) {
    chunks.push_back({{"id", c.id}, {"text", c.text}, {"tokens", c.token_count}});
  }
  j["chunks"] = std::move(chunks);
  j["gaps"] = s.gaps;
  return j;
}

Story story_from_json(const nlohmann::json& j) {
  Story s;
  s.id = j.at("id").get<std::string>();
  s.text = j.at("text").get<std::string>();
  if (j.contains("label")) s.label = parse_narrative(j["label"].get<std::string>());
  std::size_t i = 0;
  for (const auto& c : j.at("chunks")) {
    Chunk chunk;
    chunk.id = c.at("id").get<std::string>();
    chunk.story_id = s.id;
    chunk.index = i++;
    chunk.text = c.at("text").get<std::string>();
    chunk.token_count = c.at("tokens").get<std::size_t>();
    s.chunks.push_back(std::move(chunk));
  }
  s.gaps = j.at("gaps").get<std::vector<std::string>>();
  if (s.gaps.size() != s.chunks.size() + 1 || s.assemble() != s.text) {
    throw ConfigError("story " + s.id + " in run file does not reassemble");
  }
  return s;
}

namespace {

nlohmann::ordered_json ratings_to_json(const IterationRecord& rec) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < rec.ratings.size(); ++i) {
    nlohmann::ordered_json r = nlohmann::ordered_json::object();
    for (const auto& [f, raw] : rec.ratings[i]) r[feature_constant(f)] = raw;
    j[rec.story.chunks.at(i).id] = std::move(r);
  }
  return j;
}

Explanation explanation_from_json(const nlohmann::json& j) {
  Explanation e;
  e.score = j.at("score").get<double>();
  e.s_feat_before = j.at("s_feat_before").get<double>();
  e.s_feat_after = j.at("s_feat_after").get<double>();
  e.feature_count = j.at("feature_count").get<std::size_t>();
  for (const auto& a : j.at("atoms")) {
    ExplanationAtom atom;
    atom.chunk_id = a.at("chunk_id").get<std::string>();
    atom.candidate.chunk = a.at("chunk_index").get<std::size_t>();
    atom.candidate.feature = parse_feature_constant(a.at("feature").get<std::string>()).value_or(0);
    atom.candidate.observed = a.at("observed").get<double>();
    atom.candidate.raised = a.at("target").get<double>();
    atom.marginal = a.at("marginal").get<double>();
    e.atoms.push_back(std::move(atom));
  }
  return e;
}

}  // namespace

nlohmann::ordered_json to_json(const TransformRun& run) {
  nlohmann::ordered_json j;
  j["version"] = kRunVersion;
  j["story_id"] = run.original.id;
  j["method"] = to_string(run.method);
  j["direction"] = to_string(direction_to(run.target));
  j["target"] = to_string(run.target);
  nlohmann::ordered_json settings = nlohmann::ordered_json::object();
  for (const auto& [k, v] : run.settings) settings[k] = v;
  j["settings"] = std::move(settings);
  j["original"] = story_to_json(run.original);
  auto iterations = nlohmann::ordered_json::array();
  for (const auto& rec : run.iterations) {
    nlohmann::ordered_json r;
    r["t"] = rec.t;
    r["story_score"] = rec.story_score;
    r["story"] = story_to_json(rec.story);
    r["ratings"] = ratings_to_json(rec);
    r["explanation"] = rec.explanation ? to_json(*rec.explanation, rec.story) : nlohmann::ordered_json();
    auto rewrites = nlohmann::ordered_json::array();
    for (const auto& rw : rec.rewrites) {
      nlohmann::ordered_json w;
      w["chunk_index"] = rw.chunk;
      w["feature"] = feature_constant(rw.feature);
      w["tau"] = rw.tau;
      w["observed"] = rw.observed;
      w["tokens"] = rw.tokens;
      w["before"] = rw.before;
      w["after"] = rw.after;
      w["rejected"] = rw.rejected;
      if (!rw.note.empty()) w["note"] = rw.note;
      rewrites.push_back(std::move(w));
    }
    r["rewrites"] = std::move(rewrites);
    r["calls"] = to_json(rec.calls);
    if (!rec.stop.empty()) r["stop"] = rec.stop;
    iterations.push_back(std::move(r));
  }
  j["iterations"] = std::move(iterations);
  j["selected_iteration"] =
      run.selected_iteration ? nlohmann::ordered_json(*run.selected_iteration) : nlohmann::ordered_json();
  j["final"] = story_to_json(run.final);
  j["score_mode"] = to_string(run.score_mode);
  j["score_original"] = run.score_original;
  j["score_final"] = run.score_final;
  j["n_c"] = run.n_c;
  j["token_share_pct"] = run.token_share;
  j["ledger"] = to_json(run.ledger);
  j["error"] = run.error ? nlohmann::ordered_json(*run.error) : nlohmann::ordered_json();
  return j;
}

TransformRun transform_run_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("version").get<int>();
    if (version != kRunVersion) {
      throw VersionError("run file version " + std::to_string(version) + " is not supported");
    }
    TransformRun run;
    const auto method = parse_method(j.at("method").get<std::string>());
    const auto target = parse_narrative(j.at("target").get<std::string>());
    const auto mode = parse_survey_mode(j.at("score_mode").get<std::string>());
    if (!method || !target || !mode) throw ConfigError("run file has a bad method/target/score_mode");
    run.method = *method;
    run.target = *target;
    run.score_mode = *mode;
    for (const auto& [k, v] : j.at("settings").items()) run.settings[k] = v.get<std::string>();
    run.original = story_from_json(j.at("original"));
    for (const auto& r : j.at("iterations")) {
      IterationRecord rec;
      rec.t = r.at("t").get<int>();
      rec.story_score = r.at("story_score").get<double>();
      rec.story = story_from_json(r.at("story"));
      for (const auto& c : rec.story.chunks) {
        std::map<int, int> ratings;
        for (const auto& [f, raw] : r.at("ratings").at(c.id).items()) {
          ratings[parse_feature_constant(f).value_or(0)] = raw.get<int>();
        }
        rec.ratings.push_back(std::move(ratings));
      }
      if (!r.at("explanation").is_null()) rec.explanation = explanation_from_json(r["explanation"]);
      for (const auto& w : r.at("rewrites")) {
        RewriteRecord rw;
        rw.chunk = w.at("chunk_index").get<std::size_t>();
        rw.feature = parse_feature_constant(w.at("feature").get<std::string>()).value_or(0);
        rw.tau = w.at("tau").get<double>();
        rw.observed = w.at("observed").get<double>();
        rw.tokens = w.at("tokens").get<std::size_t>();
        rw.before = w.at("before").get<std::string>();
        rw.after = w.at("after").get<std::string>();
        rw.rejected = w.at("rejected").get<bool>();
        rw.note = w.value("note", "");
        rec.rewrites.push_back(std::move(rw));
      }
      rec.calls = ledger_totals_from_json(r.at("calls"));
      rec.stop = r.value("stop", "");
      run.iterations.push_back(std::move(rec));
    }
    if (!j.at("selected_iteration").is_null()) run.selected_iteration = j["selected_iteration"].get<int>();
    run.final = story_from_json(j.at("final"));
    run.score_original = j.at("score_original").get<double>();
    run.score_final = j.at("score_final").get<double>();
    run.n_c = j.at("n_c").get<std::size_t>();
    run.token_share = j.at("token_share_pct").get<double>();
    run.ledger = ledger_totals_from_json(j.at("ledger"));
    if (!j.at("error").is_null()) run.error = j["error"].get<std::string>();
    return run;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run file: ") + e.what());
  }
}

void save_run(const TransformRun& run, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot write " + path.string());
  out << to_json(run).dump(2) << '\n';
  if (!out) throw IOError("write failed for " + path.string());
}

TransformRun load_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed run file " + path.string() + ": " + e.what());
  }
  return transform_run_from_json(j);
}

}  // namespace narrshift
