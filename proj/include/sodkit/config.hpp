#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sodkit/data.hpp"
#include "sodkit/metrics.hpp"
#include "sodkit/model.hpp"
#include "sodkit/training.hpp"

namespace sodkit {

// Everything a command can be configured with.
struct RunConfig {
    ModelConfig model;
    train::TrainConfig train;
    data::DatasetSpec data;
    metrics::EMeasureMode emeasure = metrics::EMeasureMode::kAdaptive;
};

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

struct ConfigKey {
    std::string key;  // "section.name"
    std::string doc;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

// Every accepted key, in canonical order.
const std::vector<ConfigKey>& config_keys();

// Throws ConfigError for unknown keys and malformed values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
// "dotted.key=value".
void apply_override(RunConfig& cfg, const std::string& assignment);

// Canonical entries; the prefix filter selects a section ("model.").
ConfigEntries config_entries(const RunConfig& cfg, const std::string& prefix = "");
void apply_entries(RunConfig& cfg, const ConfigEntries& entries);

// Sectioned key = value text:
//   [model]
//   encoder = "tiny"
// '#' starts a comment. Keys outside a section are taken as dotted keys.
ConfigEntries parse_config_text(const std::string& text);
std::string format_config_text(const ConfigEntries& entries);

RunConfig load_config_file(const std::filesystem::path& path);
void write_config_file(const RunConfig& cfg, const std::filesystem::path& path);

// Reference listing of every key with its default and description.
std::string describe_config_keys();

}  // namespace sodkit
