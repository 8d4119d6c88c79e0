// Thin bindings: structured values cross the boundary as JSON text and are
// decoded on the python side.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "narrshift/corpus.hpp"
#include "narrshift/errors.hpp"
#include "narrshift/evaluation.hpp"
#include "narrshift/llm_gateway.hpp"
#include "narrshift/logic.hpp"
#include "narrshift/mock_provider.hpp"
#include "narrshift/rule_learning.hpp"
#include "narrshift/text.hpp"
#include "narrshift/transform.hpp"

namespace py = pybind11;
using namespace narrshift;

namespace {

std::unique_ptr<Gateway> mock_gateway(std::uint64_t seed) {
  ProviderConfig cfg;
  cfg.kind = ProviderKind::mock;
  cfg.seed = seed;
  cfg.retry.backoff_base = std::chrono::milliseconds(0);
  return std::make_unique<Gateway>(cfg, make_mock_provider(seed));
}

std::vector<std::string> chunk_text(const std::string& text, const std::string& mode) {
  ChunkingConfig cfg;
  const auto m = parse_chunk_mode(mode);
  if (!m) throw ConfigError("unknown chunking mode '" + mode + "'");
  cfg.mode = *m;
  std::vector<std::string> out;
  for (auto& c : chunk_story(text, cfg)) out.push_back(std::move(c.text));
  return out;
}

std::string file_corpus_hash(const std::filesystem::path& path) { return corpus_hash(load_stories(path)); }

std::string deduce_json(const std::string& program) {
  py::gil_scoped_release release;
  const auto closure = deduce(program_from_json(nlohmann::json::parse(program)));
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& [key, value] : closure.atoms()) out[to_string(key)] = value;
  return out.dump();
}

// Learns rules from `train` and runs the abduction loop on every story in
// `stories`, all against the deterministic mock provider.
std::vector<std::string> mock_transform(const std::filesystem::path& train,
                                        const std::filesystem::path& stories,
                                        const std::string& direction, std::uint64_t seed) {
  const auto dir = parse_direction(direction);
  if (!dir) throw ConfigError("unknown direction '" + direction + "'");
  const Narrative target = target_of(*dir);
  py::gil_scoped_release release;
  auto gateway = mock_gateway(seed);
  const auto rules = learn_rules(load_corpus(train), *gateway);
  IterativeConfig cfg;
  cfg.k = default_k(target);
  std::vector<std::string> out;
  for (const auto& s : load_stories(stories)) {
    out.push_back(to_json(run_iterative(s, target, rules, *gateway, cfg)).dump());
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_narrshift, m) {
  py::register_exception<Error>(m, "NarrshiftError", PyExc_ValueError);

  m.def("tokenize", [](const std::string& text) { return tokenize(text); }, py::arg("text"));
  m.def("chunk", &chunk_text, py::arg("text"), py::arg("mode") = "sentence");
  m.def("kl_divergence",
        [](const std::string& t, const std::string& o, double alpha) { return kl_divergence(t, o, alpha); },
        py::arg("transformed"), py::arg("original"), py::arg("alpha") = kDefaultAlpha);
  m.def("improvement", &improvement, py::arg("original_score"), py::arg("final_score"));
  m.def("corpus_hash", &file_corpus_hash, py::arg("path"));
  m.def("_deduce", &deduce_json, py::arg("program_json"));
  m.def("_mock_transform", &mock_transform, py::arg("train"), py::arg("stories"), py::arg("direction"),
        py::arg("seed") = 7);
}
