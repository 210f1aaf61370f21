#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gtselect/pipeline.hpp"

namespace gtselect {

// Values of the TOML subset read by the config loader: strings, integers,
// floats, booleans and single-line arrays of those.
struct ConfigValue {
  using Array = std::vector<ConfigValue>;
  std::variant<std::string, std::int64_t, double, bool, Array> value;
  int line = 0;
};

// section -> key -> value. Top-level keys live in section "".
using ConfigTable = std::map<std::string, std::map<std::string, ConfigValue>>;

ConfigTable parse_config_table(std::string_view text);

// Applies a config file on top of `base`. Unknown sections or keys are
// errors. A `[run] preset = "benchmark"` key replaces `base` with the
// benchmark preset before any other key is applied.
PipelineConfig parse_config(std::string_view text, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});

}  // namespace gtselect
