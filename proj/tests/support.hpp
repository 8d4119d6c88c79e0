#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "narrshift/corpus.hpp"
#include "narrshift/llm_gateway.hpp"
#include "narrshift/mock_provider.hpp"

namespace testing_support {

inline std::filesystem::path data_dir() { return NARRSHIFT_TEST_DATA_DIR; }
inline std::filesystem::path fixture(const std::string& name) {
  return data_dir() / "fixtures" / name;
}

inline narrshift::ProviderConfig mock_config(std::uint64_t seed = 0) {
  narrshift::ProviderConfig cfg;
  cfg.kind = narrshift::ProviderKind::mock;
  cfg.seed = seed;
  cfg.retry.backoff_base = std::chrono::milliseconds(0);
  return cfg;
}

struct MockSetup {
  std::shared_ptr<narrshift::MockProvider> provider;
  std::unique_ptr<narrshift::Gateway> gateway;
};

inline MockSetup mock_gateway(std::uint64_t seed = 0,
                              narrshift::MockMode mode = narrshift::MockMode::rules,
                              int max_in_flight = 4) {
  MockSetup m;
  m.provider = narrshift::make_mock_provider(seed, mode);
  auto cfg = mock_config(seed);
  cfg.max_in_flight = max_in_flight;
  m.gateway = std::make_unique<narrshift::Gateway>(cfg, m.provider);
  return m;
}

// Fresh scratch directory under the build tree, emptied on creation.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::path(NARRSHIFT_TEST_SCRATCH_DIR) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
