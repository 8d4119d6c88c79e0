#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "narrshift/abduction.hpp"
#include "narrshift/config.hpp"
#include "narrshift/corpus.hpp"
#include "narrshift/diagnosis.hpp"
#include "narrshift/errors.hpp"
#include "narrshift/evaluation.hpp"
#include "narrshift/llm_gateway.hpp"
#include "narrshift/rule_learning.hpp"
#include "narrshift/text.hpp"
#include "narrshift/transform.hpp"

namespace fs = std::filesystem;
using namespace narrshift;

namespace {

// Keys a config file or --set may carry besides the provider keys.
const std::vector<std::string> kRunKeys = {"k",      "t_max",       "agg",    "chunking",
                                           "runs",   "survey_mode", "prompt", "alpha",
                                           "jobs",   "direction",   "method", "all_levels",
                                           "out",    "rules"};

struct Options {
  std::string provider = "mock";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> k;
  std::optional<int> t_max;
  std::optional<std::string> agg;
  std::optional<std::string> chunking;
  std::optional<std::string> survey_mode;
  std::optional<int> runs;
  std::optional<std::string> out;
  std::optional<int> jobs;
  std::optional<std::string> method;
  std::optional<std::string> rules;
  std::optional<std::string> prompt;
  std::optional<double> alpha;
  std::optional<std::string> direction;
  std::optional<std::string> narrative;
  bool all_levels = false;
  std::string input;
  std::string runs_dir;
};

// Resolved settings: explicit flags beat --set pairs, which beat the config
// file, which beats the defaults.
struct Settings {
  ProviderConfig provider;
  std::map<std::string, std::string> run;

  std::string get(const std::string& key, const std::string& fallback) const {
    const auto it = run.find(key);
    return it == run.end() ? fallback : it->second;
  }
};

long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long x = std::stol(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected an integer, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

Settings resolve(const Options& o) {
  std::map<std::string, std::string> values;
  if (o.provider != "mock") values = load_key_values(o.provider);
  for (const auto& pair : o.overrides) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + pair + "'");
    values[std::string(trim(pair.substr(0, eq)))] = std::string(trim(pair.substr(eq + 1)));
  }
  Settings s;
  std::map<std::string, std::string> provider_values;
  for (auto& [key, value] : values) {
    if (std::find(kRunKeys.begin(), kRunKeys.end(), key) != kRunKeys.end()) {
      s.run[key] = value;
    } else {
      provider_values[key] = value;
    }
  }
  if (o.provider == "mock") provider_values.emplace("kind", "mock");
  auto set = [&](const char* key, const auto& opt) {
    if (!opt) return;
    std::ostringstream os;
    os << *opt;
    s.run[key] = os.str();
  };
  set("k", o.k);
  set("t_max", o.t_max);
  set("agg", o.agg);
  set("chunking", o.chunking);
  set("survey_mode", o.survey_mode);
  set("runs", o.runs);
  set("out", o.out);
  set("jobs", o.jobs);
  set("method", o.method);
  set("rules", o.rules);
  set("prompt", o.prompt);
  set("direction", o.direction);
  if (o.alpha) s.run["alpha"] = format_fixed(*o.alpha, 17);
  if (o.all_levels) s.run["all_levels"] = "true";
  if (o.seed) provider_values["seed"] = std::to_string(*o.seed);
  s.provider = provider_config_from(provider_values);
  s.provider.validate();
  return s;
}

ChunkingConfig chunking_of(const Settings& s) {
  ChunkingConfig c;
  const auto mode = parse_chunk_mode(s.get("chunking", "sentence"));
  if (!mode) throw ConfigError("unknown chunking mode '" + s.get("chunking", "") + "'");
  c.mode = *mode;
  return c;
}

DiagnosisOptions diagnosis_of(const Settings& s) {
  DiagnosisOptions d;
  d.runs = static_cast<int>(parse_long("runs", s.get("runs", "10")));
  if (d.runs < 1) throw ConfigError("runs must be >= 1");
  return d;
}

AggKind agg_of(const Settings& s) {
  const auto agg = parse_agg(s.get("agg", "mean"));
  if (!agg) throw ConfigError("unknown aggregator '" + s.get("agg", "") + "'");
  return *agg;
}

int jobs_of(const Settings& s) {
  const long jobs = parse_long("jobs", s.get("jobs", "1"));
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  return static_cast<int>(jobs);
}

fs::path out_of(const Settings& s) { return s.get("out", "out"); }

std::vector<Story> read_stories(const fs::path& path, const ChunkingConfig& cfg) {
  if (!fs::exists(path)) throw IOError("no such file: " + path.string());
  if (path.extension() == ".jsonl") return load_stories(path, cfg);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return {make_story(path.stem().string(), text.str(), std::nullopt, cfg)};
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IOError("write failed for " + path.string());
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads; the first error wins.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
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
}

int cmd_learn(const Options& o) {
  const Settings s = resolve(o);
  const auto cfg = chunking_of(s);
  std::optional<Narrative> expected;
  if (o.narrative) {
    expected = parse_narrative(*o.narrative);
    if (!expected) throw ConfigError("unknown narrative '" + *o.narrative + "'");
  }
  const Corpus corpus = load_corpus(o.input, cfg, expected);
  auto gateway = make_gateway(s.provider);
  LearnConfig lc;
  lc.agg = agg_of(s);
  lc.diagnosis = diagnosis_of(s);
  const LearnedRules rules = learn_rules(corpus, *gateway, lc);
  gateway->flush_cache();
  const fs::path path = s.run.count("rules") ? fs::path(s.run.at("rules")) : out_of(s) / "rules.json";
  save_rules(rules, path);
  std::cout << "orientation " << to_string(corpus.orientation) << ", " << corpus.stories.size()
            << " stories, agg " << to_string(lc.agg) << "\n";
  for (int level = 0; level <= 5; ++level) {
    std::cout << "conf(" << format_level(grid_value(level))
              << ") = " << format_fixed(rules.table.conf[static_cast<std::size_t>(level)], 4) << "\n";
  }
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

int cmd_diagnose(const Options& o) {
  const Settings s = resolve(o);
  const auto stories = read_stories(o.input, chunking_of(s));
  std::vector<Narrative> narratives = {Narrative::individualistic, Narrative::collectivistic};
  if (o.narrative) {
    const auto n = parse_narrative(*o.narrative);
    if (!n) throw ConfigError("unknown narrative '" + *o.narrative + "'");
    narratives = {*n};
  }
  auto gateway = make_gateway(s.provider);
  DiagnosisOptions d = diagnosis_of(s);
  const int jobs = jobs_of(s);
  std::vector<nlohmann::ordered_json> results(stories.size());
  parallel_for(stories.size(), jobs, [&](std::size_t i) {
    const Story& story = stories[i];
    nlohmann::ordered_json j;
    j["story_id"] = story.id;
    j["runs"] = d.runs;
    for (Narrative n : narratives) {
      const auto r = diagnose_story(story, n, *gateway, d);
      nlohmann::ordered_json part;
      part["story_score"] = r.story_score(n);
      part["ratings"] = to_json(r);
      part["stability"] = stability_summary(r, n);
      j[std::string(to_string(n))] = std::move(part);
    }
    results[i] = std::move(j);
  });
  gateway->flush_cache();
  for (std::size_t i = 0; i < stories.size(); ++i) {
    const fs::path path = out_of(s) / "diagnosis" / (stories[i].id + ".json");
    write_json(path, results[i]);
    std::cout << stories[i].id;
    for (Narrative n : narratives) {
      std::cout << "  " << to_code(n) << "="
                << format_fixed(results[i][std::string(to_string(n))]["story_score"].get<double>(), 2);
    }
    std::cout << "\n";
  }
  return 0;
}

int cmd_transform(const Options& o) {
  const Settings s = resolve(o);
  const auto direction = parse_direction(s.get("direction", ""));
  if (!direction) throw ConfigError("--direction must be C->I or I->C");
  const Narrative target = target_of(*direction);
  const auto method = parse_method(s.get("method", "abduction"));
  if (!method) throw ConfigError("unknown method '" + s.get("method", "") + "'");

  IterativeConfig ic;
  ic.k = s.run.count("k") ? static_cast<std::size_t>(parse_long("k", s.run.at("k"))) : default_k(target);
  ic.t_max = static_cast<int>(parse_long("t_max", s.get("t_max", "3")));
  ic.all_levels = s.get("all_levels", "false") == "true";
  const auto mode = parse_survey_mode(s.get("survey_mode", "direct"));
  if (!mode) throw ConfigError("unknown survey mode '" + s.get("survey_mode", "") + "'");
  ic.score_mode = *mode;
  const auto prompt = parse_prompt_mode(s.get("prompt", "steered"));
  if (!prompt) throw ConfigError("unknown prompt mode '" + s.get("prompt", "") + "'");
  ic.transform.prompt = *prompt;
  ic.transform.chunking = chunking_of(s);
  ic.diagnosis = diagnosis_of(s);

  std::optional<LearnedRules> rules;
  if (*method == Method::abduction) {
    if (!s.run.count("rules")) throw ConfigError("abduction needs a rules file (--rules)");
    rules = load_rules(s.run.at("rules"));
    if (rules->table.orientation != target) {
      throw ConfigError("rules were learned for " + std::string(to_string(rules->table.orientation)) +
                        " but " + std::string(to_string(*direction)) + " targets " +
                        std::string(to_string(target)));
    }
  }

  const auto stories = read_stories(o.input, ic.transform.chunking);
  auto gateway = make_gateway(s.provider);
  std::vector<TransformRun> runs(stories.size());
  parallel_for(stories.size(), jobs_of(s), [&](std::size_t i) {
    runs[i] = *method == Method::abduction ? run_iterative(stories[i], target, *rules, *gateway, ic)
                                           : run_baseline(stories[i], target, *gateway, ic);
  });
  gateway->flush_cache();

  int status = 0;
  for (const auto& run : runs) {
    const fs::path path =
        out_of(s) / "runs" / (run.original.id + "." + std::string(to_string(run.method)) + ".json");
    save_run(run, path);
    std::cout << run.original.id << "  " << format_fixed(run.score_original, 2) << " -> "
              << format_fixed(run.score_final, 2);
    if (run.error) {
      std::cout << "  error: " << *run.error;
      status = 1;
    }
    std::cout << "\n";
  }
  return status;
}

int cmd_evaluate(const Options& o) {
  const Settings s = resolve(o);
  const fs::path dir = o.runs_dir.empty() ? out_of(s) / "runs" : fs::path(o.runs_dir);
  if (!fs::is_directory(dir)) throw IOError("no run artifacts under " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  if (files.empty()) throw IOError("no run artifacts under " + dir.string());
  std::sort(files.begin(), files.end());
  const double alpha = parse_double("alpha", s.get("alpha", "1e-05"));
  std::vector<EvalReport> reports;
  for (const auto& f : files) reports.push_back(evaluate_run(load_run(f), alpha));
  emit_report(reports, out_of(s), alpha);
  std::cout << render_csv(reports);
  return 0;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--provider", o.provider, "\"mock\" or a provider config file (key = value lines)");
  sub->add_option("--set", o.overrides, "Override a config key, key=value (repeatable)");
  sub->add_option("--seed", o.seed, "Seed for the mock provider");
  sub->add_option("--out", o.out, "Output directory (default out)");
  sub->add_option("--runs", o.runs, "Survey repetitions per question (default 10)");
  sub->add_option("--chunking", o.chunking, "sentence or paragraph (default sentence)")
      ->check(CLI::IsMember({"sentence", "paragraph"}));
  sub->add_option("--jobs", o.jobs, "Stories processed in parallel (default 1)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Narrative shift through diagnosis, abduction and targeted rewriting"};
  app.require_subcommand(1);
  Options o;

  auto* learn = app.add_subcommand("learn", "Learn corpus-similarity rules from a labeled corpus");
  learn->add_option("corpus", o.input, "Labeled JSONL corpus")->required();
  learn->add_option("--agg", o.agg, "Feature aggregator: mean, max or median")
      ->check(CLI::IsMember({"mean", "max", "median"}));
  learn->add_option("--rules", o.rules, "Where to write the rules (default OUT/rules.json)");
  learn->add_option("--narrative", o.narrative, "Expected corpus orientation");
  add_common(learn, o);

  auto* diagnose = app.add_subcommand("diagnose", "Survey stories and report per-feature medians");
  diagnose->add_option("stories", o.input, "JSONL stories or a plain text file")->required();
  diagnose->add_option("--narrative", o.narrative, "Only survey this narrative's features");
  add_common(diagnose, o);

  auto* transform = app.add_subcommand("transform", "Shift stories toward the target narrative");
  transform->add_option("stories", o.input, "JSONL stories or a plain text file")->required();
  transform->add_option("--direction", o.direction, "C->I or I->C")->required();
  transform->add_option("--method", o.method, "abduction (default) or baseline")
      ->check(CLI::IsMember({"abduction", "baseline"}));
  transform->add_option("--rules", o.rules, "Rules file for the target orientation");
  transform->add_option("--k", o.k, "Feature budget (default 2 for C->I, 3 for I->C)");
  transform->add_option("--t-max", o.t_max, "Maximum rounds (default 3)");
  transform->add_option("--survey-mode", o.survey_mode, "direct (default) or rollup")
      ->check(CLI::IsMember({"direct", "rollup"}));
  transform->add_option("--prompt", o.prompt, "steered (default) or verbatim")
      ->check(CLI::IsMember({"steered", "verbatim"}));
  transform->add_flag("--all-levels", o.all_levels, "Propose every grid level above the observed one");
  add_common(transform, o);

  auto* evaluate = app.add_subcommand("evaluate", "Score run artifacts into report.csv and summary.json");
  evaluate->add_option("--from", o.runs_dir, "Directory of run artifacts (default OUT/runs)");
  evaluate->add_option("--alpha", o.alpha, "KL smoothing constant (default 1e-5)");
  add_common(evaluate, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*learn) return cmd_learn(o);
    if (*diagnose) return cmd_diagnose(o);
    if (*transform) return cmd_transform(o);
    return cmd_evaluate(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
