#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "narrshift/llm_gateway.hpp"

namespace narrshift {

// Simple `key = value` text format: one pair per line, '#' starts a comment
// line, surrounding double quotes around a value are dropped. Throws
// ConfigError naming the line on malformed input or a repeated key.
std::map<std::string, std::string> parse_key_values(std::string_view text);
std::map<std::string, std::string> load_key_values(const std::filesystem::path& path);

// Keys: kind, base_url, model, api_key_env, temperature_diagnosis,
// temperature_transform, max_in_flight, max_attempts, backoff_ms,
// backoff_factor, timeout_seconds, response_cache, seed, mock_mode.
ProviderConfig provider_config_from(const std::map<std::string, std::string>& values);

}  // namespace narrshift
