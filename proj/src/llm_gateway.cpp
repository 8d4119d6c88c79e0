#include "narrshift/llm_gateway.hpp"

#include <cmath>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "narrshift/mock_provider.hpp"
#include "narrshift/text.hpp"

namespace narrshift {

std::string_view to_string(Purpose p) {
  return p == Purpose::diagnosis ? "diagnosis" : "transform";
}

void ProviderConfig::validate() const {
  if (kind == ProviderKind::http) {
    if (base_url.empty()) throw ConfigError("http provider needs base_url");
    if (model.empty()) throw ConfigError("http provider needs model");
  }
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (retry.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  if (retry.backoff_base.count() < 0 || retry.backoff_factor < 1.0) {
    throw ConfigError("backoff must be non-negative with factor >= 1");
  }
  if (timeout_seconds < 1) throw ConfigError("timeout must be >= 1 second");
  for (double t : {temperature_diagnosis, temperature_transform}) {
    if (!(t >= 0.0 && t <= 2.0)) throw ConfigError("temperature must lie in [0,2]");
  }
  if (kind == ProviderKind::mock && !parse_mock_mode(mock_mode)) {
    throw ConfigError("unknown mock_mode '" + mock_mode + "'");
  }
}

nlohmann::ordered_json to_json(const LedgerTotals& t) {
  nlohmann::ordered_json j;
  j["diagnosis_calls"] = t.diagnosis_calls;
  j["transform_calls"] = t.transform_calls;
  j["prompt_tokens"] = t.prompt_tokens;
  j["completion_tokens"] = t.completion_tokens;
  j["retries"] = t.retries;
  j["failures"] = t.failures;
  j["estimated_tokens"] = t.estimated_tokens;
  return j;
}

LedgerTotals ledger_totals_from_json(const nlohmann::json& j) {
  LedgerTotals t;
  t.diagnosis_calls = j.at("diagnosis_calls").get<long>();
  t.transform_calls = j.at("transform_calls").get<long>();
  t.prompt_tokens = j.at("prompt_tokens").get<long>();
  t.completion_tokens = j.at("completion_tokens").get<long>();
  t.retries = j.at("retries").get<long>();
  t.failures = j.at("failures").get<long>();
  t.estimated_tokens = j.at("estimated_tokens").get<bool>();
  return t;
}

namespace {

void accumulate(LedgerTotals& t, const CallRecord& r) {
  (r.purpose == Purpose::diagnosis ? t.diagnosis_calls : t.transform_calls) += 1;
  t.prompt_tokens += r.prompt_tokens;
  t.completion_tokens += r.completion_tokens;
  t.retries += r.attempts - 1;
  if (!r.ok) t.failures += 1;
  t.estimated_tokens = t.estimated_tokens || r.estimated;
}

}  // namespace

CallLedger::CallLedger(const CallLedger& other) {
  std::lock_guard lock(other.mutex_);
  totals_ = other.totals_;
  records_ = other.records_;
}

CallLedger& CallLedger::operator=(const CallLedger& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  totals_ = other.totals_;
  records_ = other.records_;
  return *this;
}

void CallLedger::record(const CallRecord& r) {
  std::lock_guard lock(mutex_);
  records_.push_back(r);
  accumulate(totals_, r);
}

LedgerTotals CallLedger::totals() const {
  std::lock_guard lock(mutex_);
  return totals_;
}

std::vector<CallRecord> CallLedger::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

bool CallLedger::consistent() const {
  std::lock_guard lock(mutex_);
  LedgerTotals sum;
  for (const auto& r : records_) accumulate(sum, r);
  return sum == totals_;
}

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  try {
    nlohmann::json j;
    in >> j;
    entries_ = j.get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw IOError("corrupt response cache " + path_.string() + ": " + e.what());
  }
}

std::string ResponseCache::key(const ChatRequest& request) {
  nlohmann::ordered_json j;
  j["model"] = request.model;
  j["temperature"] = format_fixed(request.temperature, 3);
  auto messages = nlohmann::ordered_json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  j["messages"] = std::move(messages);
  return sha256_hex(j.dump());
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::put(const std::string& key, const std::string& reply) {
  std::lock_guard lock(mutex_);
  entries_[key] = reply;
}

void ResponseCache::save() const {
  std::lock_guard lock(mutex_);
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot write " + path_.string());
  out << nlohmann::json(entries_).dump(1) << '\n';
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

// Holds one of the gateway's in-flight slots for its lifetime.
class Gateway::Slot {
 public:
  explicit Slot(Gateway& g) : g_(g) {
    std::unique_lock lock(g_.slots_mutex_);
    g_.slots_cv_.wait(lock, [&] { return g_.in_flight_ < g_.config_.max_in_flight; });
    ++g_.in_flight_;
  }
  ~Slot() {
    {
      std::lock_guard lock(g_.slots_mutex_);
      --g_.in_flight_;
    }
    g_.slots_cv_.notify_one();
  }
  Slot(const Slot&) = delete;
  Slot& operator=(const Slot&) = delete;

 private:
  Gateway& g_;
};

Gateway::Gateway(ProviderConfig config, std::shared_ptr<Provider> provider)
    : config_(std::move(config)), provider_(std::move(provider)) {
  config_.validate();
  if (!provider_) throw ConfigError("gateway needs a provider");
  if (config_.response_cache) cache_ = std::make_unique<ResponseCache>(*config_.response_cache);
}

Gateway::~Gateway() {
  try {
    flush_cache();
  } catch (...) {
  }
}

void Gateway::flush_cache() const {
  if (cache_) cache_->save();
}

Completion Gateway::complete(std::string_view prompt, Purpose purpose, std::string_view subject,
                             CallLedger* run_ledger) {
  return complete({ChatMessage{"user", std::string(prompt)}}, purpose, subject, run_ledger);
}

Completion Gateway::complete(std::vector<ChatMessage> messages, Purpose purpose,
                             std::string_view subject, CallLedger* run_ledger) {
  ChatRequest request;
  request.messages = std::move(messages);
  request.model = config_.model;
  request.temperature = config_.temperature_for(purpose);
  request.purpose = purpose;

  CallRecord rec;
  rec.purpose = purpose;
  rec.subject = std::string(subject);
  const auto log = [&](const CallRecord& r) {
    ledger_.record(r);
    if (run_ledger) run_ledger->record(r);
  };

  long prompt_estimate = 0;
  for (const auto& m : request.messages) prompt_estimate += static_cast<long>(count_tokens(m.content));

  std::string cache_key;
  if (cache_) {
    cache_key = ResponseCache::key(request);
    if (auto hit = cache_->get(cache_key)) {
      rec.cached = true;
      rec.estimated = true;
      rec.prompt_tokens = prompt_estimate;
      rec.completion_tokens = static_cast<long>(count_tokens(*hit));
      log(rec);
      return {*hit, rec.prompt_tokens, rec.completion_tokens, true, 1};
    }
  }

  const auto start = std::chrono::steady_clock::now();
  const std::string purpose_name(to_string(purpose));
  std::string last_cause;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    rec.attempts = attempt;
    try {
      ChatResponse response;
      {
        Slot slot(*this);
        response = provider_->complete(request);
      }
      rec.latency_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      if (response.usage) {
        rec.prompt_tokens = response.usage->prompt_tokens;
        rec.completion_tokens = response.usage->completion_tokens;
      } else {
        rec.estimated = true;
        rec.prompt_tokens = prompt_estimate;
        rec.completion_tokens = static_cast<long>(count_tokens(response.text));
      }
      log(rec);
      if (cache_) cache_->put(cache_key, response.text);
      return {response.text, rec.prompt_tokens, rec.completion_tokens, rec.estimated, attempt};
    } catch (const ProviderFailure& failure) {
      last_cause = failure.what();
      if (failure.kind() != ProviderFailure::Kind::transient) {
        rec.ok = false;
        log(rec);
        if (failure.kind() == ProviderFailure::Kind::auth) {
          throw AuthError(purpose_name, last_cause, attempt);
        }
        throw GatewayError(purpose_name, last_cause, attempt);
      }
    }
    if (attempt < config_.retry.max_attempts) {
      const double ms = static_cast<double>(config_.retry.backoff_base.count()) *
                        std::pow(config_.retry.backoff_factor, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
    }
  }
  rec.ok = false;
  log(rec);
  throw GatewayError(purpose_name, last_cause, config_.retry.max_attempts);
}

std::shared_ptr<Gateway> make_gateway(const ProviderConfig& config) {
  config.validate();
  std::shared_ptr<Provider> provider;
  if (config.kind == ProviderKind::mock) {
    provider = make_mock_provider(config.seed, *parse_mock_mode(config.mock_mode));
  } else {
    provider = make_http_provider(config);
  }
  return std::make_shared<Gateway>(config, std::move(provider));
}

}  // namespace narrshift
