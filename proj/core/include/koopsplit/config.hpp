#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "koopsplit/monitor.hpp"

namespace koopsplit {

// Sweep axes; each run uses the base config with one (q, P, T_P1, seed index) combination.
struct SweepAxes {
    std::vector<int> latent_dims{1, 2, 3, 4};
    std::vector<double> powers{0.1, 1.0, 10.0, 100.0};
    std::vector<double> periods{350.0};
    std::vector<int> seeds{0, 1, 2, 3, 4};
    int workers = 0;  // 0 = hardware concurrency

    bool operator==(const SweepAxes&) const = default;
};

struct ExperimentConfig {
    MonitoringConfig monitoring;
    SweepAxes sweep;

    bool operator==(const ExperimentConfig&) const = default;
};

// `key = value` lines; `#` starts a comment; lists are written `[a, b, c]`.
// Unknown keys, malformed values and invariant violations raise ConfigError.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Text that parse_config() maps back to an equal config.
std::string dump_config(const ExperimentConfig& cfg);

// Applies one setting (used for command-line overrides). Does not re-validate.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value, int line = 0);

// Validates the monitoring config and the sweep axes.
void validate(const ExperimentConfig& cfg);

struct ConfigKey {
    std::string name;
    std::string help;
};
const std::vector<ConfigKey>& config_keys();

}  // namespace koopsplit
