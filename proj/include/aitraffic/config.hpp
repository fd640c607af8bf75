#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "aitraffic/simulation.hpp"

namespace aitraffic {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ConfigRef = std::variant<double*, int*, bool*, std::uint64_t*, Regime*>;

struct ConfigEntry {
  std::string key;  // "section.name"
  std::function<ConfigRef(ScenarioConfig&)> ref;
  std::string doc;
  bool local_choice = false;  // default chosen for this implementation rather than a published value
};

const std::vector<ConfigEntry>& config_registry();
std::vector<std::string> config_keys();

std::string get_value(const ScenarioConfig& cfg, const std::string& key);
/// Throws ConfigError for unknown keys (listing the valid ones) and unparsable values.
void set_value(ScenarioConfig& cfg, const std::string& key, const std::string& value);

/// Applies "key=value" strings in order.
void apply_overrides(ScenarioConfig& cfg, const std::vector<std::string>& overrides);

/// Reads an INI file on top of the defaults. Throws ConfigError.
ScenarioConfig load_config(const std::filesystem::path& path);
ScenarioConfig parse_config(const std::string& ini_text);

/// INI text of every key, one per line, with its documentation comment.
std::string serialize_config(const ScenarioConfig& cfg);

/// Cross-checks bounds and flag consistency. Throws ConfigError listing every problem.
void validate(const ScenarioConfig& cfg);

}  // namespace aitraffic
