#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "narrshift/errors.hpp"

namespace narrshift {

enum class Purpose { diagnosis, transform };
std::string_view to_string(Purpose p);

enum class ProviderKind { http, mock };

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{500};
  double backoff_factor = 2.0;
};

// What a provider is told to do. api keys never live here; the HTTP
// provider reads the environment variable named by `api_key_env` per call.
struct ProviderConfig {
  ProviderKind kind = ProviderKind::mock;
  std::string base_url;
  std::string model = "mock";
  std::string api_key_env = "OPENAI_API_KEY";
  double temperature_diagnosis = 0.0;
  double temperature_transform = 0.7;
  int max_in_flight = 4;
  RetryPolicy retry;
  int timeout_seconds = 60;
  std::optional<std::filesystem::path> response_cache;
  std::uint64_t seed = 0;
  // Mock only: "rules" (default) or "echo".
  std::string mock_mode = "rules";

  double temperature_for(Purpose p) const {
    return p == Purpose::diagnosis ? temperature_diagnosis : temperature_transform;
  }
  std::string provider_name() const { return kind == ProviderKind::mock ? "mock" : "http"; }
  // Throws ConfigError (http without base_url/model, bad limits).
  void validate() const;
};

// Reads `key = value` lines (see config.hpp); unknown keys are rejected.
ProviderConfig load_provider_config(const std::filesystem::path& path);

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::string model;
  double temperature = 0.0;
  Purpose purpose = Purpose::diagnosis;
};

struct Usage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  std::optional<Usage> usage;
};

// Raised by providers. Transient failures are retried by the gateway.
class ProviderFailure : public Error {
 public:
  enum class Kind { transient, auth, fatal };
  ProviderFailure(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::string name() const = 0;
};

struct CallRecord {
  Purpose purpose = Purpose::diagnosis;
  std::string subject;
  double latency_ms = 0.0;
  long prompt_tokens = 0;
  long completion_tokens = 0;
  bool estimated = false;
  bool cached = false;
  int attempts = 1;
  bool ok = true;
};

struct LedgerTotals {
  long diagnosis_calls = 0;
  long transform_calls = 0;
  long prompt_tokens = 0;
  long completion_tokens = 0;
  long retries = 0;
  long failures = 0;
  bool estimated_tokens = false;

  friend bool operator==(const LedgerTotals&, const LedgerTotals&) = default;
};

nlohmann::ordered_json to_json(const LedgerTotals& t);
LedgerTotals ledger_totals_from_json(const nlohmann::json& j);

// Thread-safe call log. Counters are maintained alongside the records and
// `consistent()` re-derives them as a check.
class CallLedger {
 public:
  CallLedger() = default;
  CallLedger(const CallLedger& other);
  CallLedger& operator=(const CallLedger& other);

  void record(const CallRecord& r);
  LedgerTotals totals() const;
  std::vector<CallRecord> records() const;
  bool consistent() const;

 private:
  mutable std::mutex mutex_;
  LedgerTotals totals_;
  std::vector<CallRecord> records_;
};

// On-disk cache of replies keyed by (prompt hash, model, temperature).
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path path);
  static std::string key(const ChatRequest& request);
  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& reply);
  void save() const;
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<std::string, std::string> entries_;
};

struct Completion {
  std::string text;
  long prompt_tokens = 0;
  long completion_tokens = 0;
  bool estimated = false;
  int attempts = 1;
};

class Gateway {
 public:
  Gateway(ProviderConfig config, std::shared_ptr<Provider> provider);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  // Sends `messages`, retrying transient failures with exponential backoff.
  // Records the call in the gateway ledger and, when given, in `run_ledger`.
  // Throws AuthError (never retried) or GatewayError.
  Completion complete(std::vector<ChatMessage> messages, Purpose purpose,
                      std::string_view subject = {}, CallLedger* run_ledger = nullptr);
  Completion complete(std::string_view prompt, Purpose purpose, std::string_view subject = {},
                      CallLedger* run_ledger = nullptr);

  const ProviderConfig& config() const noexcept { return config_; }
  const CallLedger& ledger() const noexcept { return ledger_; }
  int max_in_flight() const noexcept { return config_.max_in_flight; }
  void flush_cache() const;

 private:
  class Slot;
  ProviderConfig config_;
  std::shared_ptr<Provider> provider_;
  std::unique_ptr<ResponseCache> cache_;
  CallLedger ledger_;
  std::mutex slots_mutex_;
  std::condition_variable slots_cv_;
  int in_flight_ = 0;
};

std::shared_ptr<Provider> make_http_provider(const ProviderConfig& config);

// Builds the provider named by config.kind (the standard mock rule table for mock).
std::shared_ptr<Gateway> make_gateway(const ProviderConfig& config);

}  // namespace narrshift
