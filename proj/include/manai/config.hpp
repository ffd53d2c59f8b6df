#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "manai/experiment.hpp"

namespace manai {

// Experiment config files are flat `key=value` text grouped in sections:
//
//   [harness]    program, args, list_args, working_dir, timeout_s, env.<NAME>
//   [probe]      backend, scenario, powercap_root, update_interval_ns, timeline
//   [experiment] rate, iterations, select, revision, baseline
//   [store]      data_dir
//
// '#' starts a comment. Relative paths are resolved against `base_dir`.

/// Applies one `section.key` setting. Throws ConfigError.
void apply_setting(ExperimentConfig& config, std::string_view qualified_key,
                   std::string_view value, const std::filesystem::path& base_dir);

void parse_config_text(ExperimentConfig& config, std::string_view text,
                       const std::filesystem::path& base_dir);

void load_config_file(ExperimentConfig& config, const std::filesystem::path& path);

/// Effective configuration as ordered `section.key` -> value pairs.
std::map<std::string, std::string> config_entries(const ExperimentConfig& config);

/// Renders the effective configuration in config-file syntax. Parsing the
/// output reproduces the configuration.
std::string render_config(const ExperimentConfig& config);

/// SHA-256 (hex) over the rendered configuration, without the [store]
/// section.
std::string config_digest(const ExperimentConfig& config);

/// Whitespace-separated arguments; double quotes group, backslash escapes.
std::vector<std::string> split_args(std::string_view text);
std::string join_args(const std::vector<std::string>& args);

}  // namespace manai
