#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace koopsplit {

// Invalid configuration value or malformed config file.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& what, int line = 0)
        : std::runtime_error(format(key, what, line)), key_(std::move(key)), line_(line) {}

    const std::string& key() const noexcept { return key_; }
    int line() const noexcept { return line_; }

private:
    static std::string format(const std::string& key, const std::string& what, int line) {
        std::string msg;
        if (line > 0) msg += "line " + std::to_string(line) + ": ";
        if (!key.empty()) msg += "'" + key + "': ";
        return msg + what;
    }

    std::string key_;
    int line_;
};

// State left the overflow guard (or became non-finite) during integration.
class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& what, double time, std::size_t step = 0)
        : std::runtime_error(what + " at t=" + std::to_string(time) + " s (step " +
                             std::to_string(step) + ")"),
          time_(time), step_(step) {}

    double time() const noexcept { return time_; }
    std::size_t step() const noexcept { return step_; }

private:
    double time_;
    std::size_t step_;
};

// Overall loss became non-finite during training.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(int epoch, int batch)
        : std::runtime_error("training diverged (non-finite loss) at epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(batch)),
          epoch_(epoch), batch_(batch) {}

    int epoch() const noexcept { return epoch_; }
    int batch() const noexcept { return batch_; }

private:
    int epoch_;
    int batch_;
};

// Rollout produced a non-finite state, usually because K has |lambda| > 1.
class PredictionError : public std::runtime_error {
public:
    PredictionError(std::size_t step, double spectral_radius)
        : std::runtime_error("non-finite prediction at rollout step " + std::to_string(step) +
                             " (spectral radius of K = " + std::to_string(spectral_radius) + ")"),
          step_(step), spectral_radius_(spectral_radius) {}

    std::size_t step() const noexcept { return step_; }
    double spectral_radius() const noexcept { return spectral_radius_; }

private:
    std::size_t step_;
    double spectral_radius_;
};

}  // namespace koopsplit
