#include "koopsplit/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "koopsplit/errors.hpp"

namespace koopsplit {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Ctx {
    std::string key;
    int line;
};

double to_double(const Ctx& c, std::string_view text) {
    text = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        throw ConfigError(c.key, "expected a number, got '" + std::string(text) + "'", c.line);
    return v;
}

long long to_integer(const Ctx& c, std::string_view text) {
    text = trim(text);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        throw ConfigError(c.key, "expected an integer, got '" + std::string(text) + "'", c.line);
    return v;
}

int to_int(const Ctx& c, std::string_view text) {
    const long long v = to_integer(c, text);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
        throw ConfigError(c.key, "integer out of range", c.line);
    return static_cast<int>(v);
}

std::uint64_t to_u64(const Ctx& c, std::string_view text) {
    text = trim(text);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        throw ConfigError(c.key, "expected a non-negative integer, got '" + std::string(text) + "'", c.line);
    return v;
}

bool to_bool(const Ctx& c, std::string_view text) {
    text = trim(text);
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError(c.key, "expected true or false, got '" + std::string(text) + "'", c.line);
}

std::vector<std::string_view> to_list(const Ctx& c, std::string_view text) {
    text = trim(text);
    if (text.size() < 2 || text.front() != '[' || text.back() != ']')
        throw ConfigError(c.key, "expected a list like [a, b, c]", c.line);
    text = trim(text.substr(1, text.size() - 2));
    std::vector<std::string_view> items;
    if (text.empty()) return items;
    std::size_t pos = 0;
    while (true) {
        const auto comma = text.find(',', pos);
        items.push_back(trim(text.substr(pos, comma - pos)));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return items;
}

std::vector<double> to_doubles(const Ctx& c, std::string_view text) {
    std::vector<double> out;
    for (auto item : to_list(c, text)) out.push_back(to_double(c, item));
    return out;
}

std::vector<int> to_ints(const Ctx& c, std::string_view text) {
    std::vector<int> out;
    for (auto item : to_list(c, text)) out.push_back(to_int(c, item));
    return out;
}

std::string fmt(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

template <typename T>
std::string fmt_list(const std::vector<T>& values) {
    std::string s = "[";
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) s += ", ";
        if constexpr (std::is_floating_point_v<T>) s += fmt(values[i]);
        else s += std::to_string(values[i]);
    }
    return s + "]";
}

struct Entry {
    std::string name;
    std::string help;
    std::function<void(ExperimentConfig&, const Ctx&, std::string_view)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define KS_DOUBLE(key, field, help_text)                                                     \
    Entry {                                                                                  \
        key, help_text,                                                                      \
            [](ExperimentConfig& c, const Ctx& x, std::string_view v) { c.field = to_double(x, v); }, \
            [](const ExperimentConfig& c) { return fmt(c.field); }                          \
    }
#define KS_INT(key, field, help_text)                                                        \
    Entry {                                                                                  \
        key, help_text,                                                                      \
            [](ExperimentConfig& c, const Ctx& x, std::string_view v) { c.field = to_int(x, v); }, \
            [](const ExperimentConfig& c) { return std::to_string(c.field); }               \
    }

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = {
        {"seed", "master seed for every random stream of a run",
         [](ExperimentConfig& c, const Ctx& x, std::string_view v) { c.monitoring.seed = to_u64(x, v); },
         [](const ExperimentConfig& c) { return std::to_string(c.monitoring.seed); }},
        KS_DOUBLE("phase1_s", monitoring.phase1_duration, "training period T_P1 (s)"),
        KS_DOUBLE("phase2_s", monitoring.phase2_duration, "prediction period T_P2 (s)"),
        KS_DOUBLE("dt_s", monitoring.dt, "sampling interval (s)"),
        KS_INT("resync_interval", monitoring.resync_interval, "phase-2 steps between fresh latents, 0 = never"),
        {"initial_state", "initial plant state [x, v, theta, omega]",
         [](ExperimentConfig& c, const Ctx& x, std::string_view v) {
             const auto vals = to_doubles(x, v);
             if (vals.size() != 4) throw ConfigError(x.key, "expected 4 values", x.line);
             c.monitoring.initial = Eigen::Map<const Eigen::VectorXd>(vals.data(), 4);
         },
         [](const ExperimentConfig& c) {
             return fmt_list(std::vector<double>(c.monitoring.initial.data(),
                                                 c.monitoring.initial.data() + c.monitoring.initial.size()));
         }},
        KS_DOUBLE("pendulum_mass_kg", monitoring.plant.pendulum_mass, "pendulum mass m (kg)"),
        KS_DOUBLE("cart_mass_kg", monitoring.plant.cart_mass, "cart mass M (kg)"),
        KS_DOUBLE("pendulum_length_m", monitoring.plant.length, "pendulum length L (m)"),
        KS_DOUBLE("gravity", monitoring.plant.gravity, "gravitational acceleration g (m/s^2)"),
        KS_DOUBLE("damping", monitoring.plant.damping, "cart damping delta (N s/m)"),
        KS_DOUBLE("system_noise_variance", monitoring.system_noise_variance, "additive plant noise N_s"),
        KS_DOUBLE("tx_power_watts", monitoring.channel.tx_power, "transmission power P (W)"),
        KS_DOUBLE("distance_m", monitoring.channel.distance, "sensor-observer distance R (m)"),
        KS_DOUBLE("pathloss_exp", monitoring.channel.pathloss_exp, "path loss exponent alpha"),
        KS_DOUBLE("noise_variance_w", monitoring.channel.noise_variance, "channel noise variance N_c (W)"),
        KS_DOUBLE("fading_floor", monitoring.channel.fading_floor, "lower clamp on Rayleigh magnitudes"),
        {"feedback_noisy", "send gradient feedback through the noisy channel",
         [](ExperimentConfig& c, const Ctx& x, std::string_view v) { c.monitoring.channel.feedback_noisy = to_bool(x, v); },
         [](const ExperimentConfig& c) { return std::string(c.monitoring.channel.feedback_noisy ? "true" : "false"); }},
        KS_INT("epochs", monitoring.train.epochs, "maximum training epochs"),
        KS_INT("batch_size", monitoring.train.batch_size, "windows per batch"),
        KS_INT("prediction_depth", monitoring.train.prediction_depth, "T_d, Koopman steps inside the losses"),
        {"loss_weights", "[b1, b2, b3] for reconstruction, linearity, prediction",
         [](ExperimentConfig& c, const Ctx& x, std::string_view v) {
             const auto vals = to_doubles(x, v);
             if (vals.size() != 3) throw ConfigError(x.key, "expected 3 values", x.line);
             c.monitoring.train.weights = {vals[0], vals[1], vals[2]};
         },
         [](const ExperimentConfig& c) {
             const auto& w = c.monitoring.train.weights;
             return fmt_list(std::vector<double>{w.reconstruction, w.linearity, w.prediction});
         }},
        KS_INT("patience", monitoring.train.patience, "early-stopping patience (epochs)"),
        KS_DOUBLE("val_fraction", monitoring.train.val_fraction, "held-out trailing share of windows"),
        KS_DOUBLE("learning_rate", monitoring.train.learning_rate, "Adam learning rate"),
        KS_INT("latent_dim", monitoring.model.latent_dim, "representation dimension q"),
        {"hidden_widths", "encoder hidden widths (decoder mirrors them)",
         [](ExperimentConfig& c, const Ctx& x, std::string_view v) { c.monitoring.model.hidden_widths = to_ints(x, v); },
         [](const ExperimentConfig& c) { return fmt_list(c.monitoring.model.hidden_widths); }},
        {"sweep_latent_dims", "sweep: q values",
         [](ExperimentConfig& c, const Ctx& x, std::string_view v) { c.sweep.latent_dims = to_ints(x, v); },
         [](const ExperimentConfig& c) { return fmt_list(c.sweep.latent_dims); }},
        {"sweep_powers_watts", "sweep: transmission powers (W)",
         [](ExperimentConfig& c, const Ctx& x, std::string_view v) { c.sweep.powers = to_doubles(x, v); },
         [](const ExperimentConfig& c) { return fmt_list(c.sweep.powers); }},
        {"sweep_periods_s", "sweep: training periods T_P1 (s)",
         [](ExperimentConfig& c, const Ctx& x, std::string_view v) { c.sweep.periods = to_doubles(x, v); },
         [](const ExperimentConfig& c) { return fmt_list(c.sweep.periods); }},
        {"sweep_seeds", "sweep: seed indices",
         [](ExperimentConfig& c, const Ctx& x, std::string_view v) { c.sweep.seeds = to_ints(x, v); },
         [](const ExperimentConfig& c) { return fmt_list(c.sweep.seeds); }},
        KS_INT("workers", sweep.workers, "sweep worker threads, 0 = hardware concurrency"),
    };
    return table;
}

#undef KS_DOUBLE
#undef KS_INT

}  // namespace

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value, int line) {
    const std::string k(trim(key));
    for (const auto& e : entries()) {
        if (e.name == k) {
            e.set(cfg, Ctx{k, line}, value);
            return;
        }
    }
    throw ConfigError(k, "unknown key", line);
}

void validate(const ExperimentConfig& cfg) {
    cfg.monitoring.validate();
    const auto& s = cfg.sweep;
    if (s.latent_dims.empty()) throw ConfigError("sweep_latent_dims", "must not be empty");
    if (s.powers.empty()) throw ConfigError("sweep_powers_watts", "must not be empty");
    if (s.periods.empty()) throw ConfigError("sweep_periods_s", "must not be empty");
    if (s.seeds.empty()) throw ConfigError("sweep_seeds", "must not be empty");
    for (int q : s.latent_dims)
        if (q < 1) throw ConfigError("sweep_latent_dims", "values must be >= 1");
    for (double p : s.powers)
        if (!(p > 0)) throw ConfigError("sweep_powers_watts", "values must be > 0");
    for (double t : s.periods)
        if (!(t > 0)) throw ConfigError("sweep_periods_s", "values must be > 0");
    for (int seed : s.seeds)
        if (seed < 0) throw ConfigError("sweep_seeds", "values must be >= 0");
    if (std::set<int>(s.latent_dims.begin(), s.latent_dims.end()).size() != s.latent_dims.size() ||
        std::set<double>(s.powers.begin(), s.powers.end()).size() != s.powers.size() ||
        std::set<double>(s.periods.begin(), s.periods.end()).size() != s.periods.size() ||
        std::set<int>(s.seeds.begin(), s.seeds.end()).size() != s.seeds.size())
        throw ConfigError("sweep", "axis values must be unique");
    if (s.workers < 0) throw ConfigError("workers", "must be >= 0");
}

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError("", "expected 'key = value'", line_no);
        const std::string key(trim(line.substr(0, eq)));
        if (key.empty()) throw ConfigError("", "missing key", line_no);
        if (!seen.insert(key).second) throw ConfigError(key, "duplicate key", line_no);
        apply_setting(cfg, key, line.substr(eq + 1), line_no);
    }
    validate(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("", "cannot open config file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& e : entries()) out += e.name + " = " + e.get(cfg) + "\n";
    return out;
}

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        for (const auto& e : entries()) k.push_back({e.name, e.help});
        return k;
    }();
    return keys;
}

}  // namespace koopsplit
