#include "narrshift/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "narrshift/text.hpp"

namespace narrshift {
namespace {

long parse_long(const std::string& key, const std::string& value) {
  long out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": not an integer: " + value);
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a number: " + value);
  }
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    const auto line = trim(text.substr(start, nl - start));
    start = nl + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (!out.emplace(key, value).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

std::map<std::string, std::string> load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str());
}

ProviderConfig provider_config_from(const std::map<std::string, std::string>& values) {
  ProviderConfig c;
  for (const auto& [key, value] : values) {
    if (key == "kind") {
      if (value == "http") c.kind = ProviderKind::http;
      else if (value == "mock") c.kind = ProviderKind::mock;
      else throw ConfigError("kind must be http or mock, got " + value);
    } else if (key == "base_url") {
      c.base_url = value;
    } else if (key == "model") {
      c.model = value;
    } else if (key == "api_key_env") {
      c.api_key_env = value;
    } else if (key == "temperature_diagnosis") {
      c.temperature_diagnosis = parse_double(key, value);
    } else if (key == "temperature_transform") {
      c.temperature_transform = parse_double(key, value);
    } else if (key == "max_in_flight") {
      c.max_in_flight = static_cast<int>(parse_long(key, value));
    } else if (key == "max_attempts") {
      c.retry.max_attempts = static_cast<int>(parse_long(key, value));
    } else if (key == "backoff_ms") {
      c.retry.backoff_base = std::chrono::milliseconds(parse_long(key, value));
    } else if (key == "backoff_factor") {
      c.retry.backoff_factor = parse_double(key, value);
    } else if (key == "timeout_seconds") {
      c.timeout_seconds = static_cast<int>(parse_long(key, value));
    } else if (key == "response_cache") {
      if (!value.empty()) c.response_cache = std::filesystem::path(value);
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(parse_long(key, value));
    } else if (key == "mock_mode") {
      c.mock_mode = value;
    } else if (key == "api_key") {
      throw ConfigError("api keys are read from the environment; set api_key_env instead");
    } else {
      throw ConfigError("unknown provider key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

ProviderConfig load_provider_config(const std::filesystem::path& path) {
  return provider_config_from(load_key_values(path));
}

}  // namespace narrshift
