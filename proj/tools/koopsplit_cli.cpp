// koopsplit: simulate the plant, run split Koopman monitoring, sweep configurations and
// inspect checkpoints.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime or divergence error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "koopsplit/checkpoint.hpp"
#include "koopsplit/config.hpp"
#include "koopsplit/errors.hpp"
#include "koopsplit/experiment.hpp"
#include "koopsplit/monitor.hpp"

namespace fs = std::filesystem;
using namespace koopsplit;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

fs::path default_out_dir() {
    if (const char* env = std::getenv("KOOPSPLIT_OUT_DIR"); env && *env) return env;
    return "koopsplit_out";
}

struct Options {
    std::string config_path;
    std::string out_dir;
    std::map<std::string, std::string> overrides;
    std::string checkpoint;
    std::string trajectory;
    bool quiet = false;
};

ExperimentConfig resolve_config(const Options& opt) {
    ExperimentConfig cfg = opt.config_path.empty() ? ExperimentConfig{} : load_config(opt.config_path);
    for (const auto& [key, value] : opt.overrides)
        if (!value.empty()) apply_setting(cfg, key, value);
    validate(cfg);
    return cfg;
}

int cmd_simulate(const Options& opt) {
    const ExperimentConfig cfg = resolve_config(opt);
    const auto& m = cfg.monitoring;
    const std::size_t steps = m.phase1_samples() + m.phase2_samples() - 1;
    const Trajectory traj = generate_trajectory(m.initial, steps, m.dt, m.plant,
                                                NoiseConfig{m.system_noise_variance, derive_seed(m.seed, "plant")});
    const fs::path out = opt.out_dir.empty() ? default_out_dir() : fs::path(opt.out_dir);
    fs::create_directories(out);
    write_file_atomic(out / "trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, traj); });
    if (!opt.quiet) std::cout << "wrote " << traj.size() << " samples to " << (out / "trajectory.csv").string() << '\n';
    return 0;
}

int cmd_run(const Options& opt) {
    const ExperimentConfig cfg = resolve_config(opt);
    const MonitoringResult res = run_monitoring(cfg.monitoring);
    const fs::path out = opt.out_dir.empty() ? default_out_dir() : fs::path(opt.out_dir);
    emit_run(res, out);
    if (!opt.quiet) {
        std::cout << "epochs " << res.history.size() << (res.history.early_stopped ? " (early stop)" : "")
                  << ", first/last train loss " << res.history.epochs.front().train.overall << " / "
                  << res.history.epochs.back().train.overall << '\n';
        std::cout << "phase-2 rmse " << res.rmse.rmse << " (" << res.rmse.rmse_db << " dB) over "
                  << res.predicted.size() << " steps, spectral radius " << spectral_radius(res.model) << '\n';
        std::cout << "outputs in " << out.string() << '\n';
    }
    return 0;
}

int cmd_sweep(const Options& opt) {
    const ExperimentConfig cfg = resolve_config(opt);
    const SweepSpec spec = SweepSpec::from_config(cfg);
    const fs::path out = opt.out_dir.empty() ? default_out_dir() : fs::path(opt.out_dir);
    std::size_t done = 0;
    const std::size_t total = spec.run_count();
    const SweepOutcome outcome = run_sweep(spec, [&](const SweepRow& r) {
        ++done;
        if (opt.quiet) return;
        std::cerr << '[' << done << '/' << total << "] " << run_directory_name(r) << ": ";
        if (r.ok()) std::cerr << r.rmse_db << " dB, " << r.epochs << " epochs, " << r.wall_s << " s\n";
        else std::cerr << "FAILED " << r.error << '\n';
    });
    emit_outputs(outcome, out);
    if (!opt.quiet) {
        std::cout << std::setw(4) << "q" << std::setw(10) << "P [W]" << std::setw(10) << "T_P1 [s]"
                  << std::setw(14) << "rmse [dB]" << std::setw(10) << "std" << '\n';
        for (const auto& c : outcome.table.summary())
            std::cout << std::setw(4) << c.q << std::setw(10) << c.power_watts << std::setw(10) << c.period_s
                      << std::setw(14) << std::fixed << std::setprecision(2) << c.rmse_db_mean << std::setw(10)
                      << c.rmse_db_std << std::defaultfloat << '\n';
        std::cout << "outputs in " << out.string() << '\n';
    }
    const bool failed = std::any_of(outcome.table.rows.begin(), outcome.table.rows.end(),
                                    [](const SweepRow& r) { return !r.ok(); });
    return failed ? kExitRuntime : 0;
}

int cmd_inspect(const Options& opt) {
    const SplitKoopmanModel model = load_checkpoint(fs::path(opt.checkpoint));
    const auto shape = model.shape();
    std::cout << "state_dim " << shape.state_dim << ", latent_dim " << shape.latent_dim << ", hidden [";
    for (std::size_t i = 0; i < shape.hidden_widths.size(); ++i)
        std::cout << (i ? ", " : "") << shape.hidden_widths[i];
    std::cout << "]\n";
    std::cout << "parameters: encoder " << model.encoder.parameter_count() << ", decoder "
              << model.decoder.parameter_count() << ", K " << model.koopman.size() << '\n';
    const Eigen::IOFormat fmt(Eigen::FullPrecision, 0, ", ", "\n", "  [", "]");
    std::cout << "K =\n" << model.koopman.format(fmt) << '\n';
    std::cout << "eigenvalues:\n";
    for (const auto& l : koopman_spectrum(model))
        std::cout << "  " << l.real() << (l.imag() < 0 ? " - " : " + ") << std::abs(l.imag()) << "i  (|l| = "
                  << std::abs(l) << ")\n";
    std::cout << "spectral radius " << spectral_radius(model) << '\n';
    std::cout << "state mean  " << model.state_norm.mean.transpose() << '\n';
    std::cout << "state scale " << model.state_norm.scale.transpose() << '\n';
    std::cout << "latent scale " << model.latent_norm.scale.transpose() << '\n';
    if (!opt.trajectory.empty()) {
        std::ifstream is(opt.trajectory);
        if (!is) throw std::runtime_error("cannot open " + opt.trajectory);
        const Trajectory traj = read_trajectory_csv(is);
        std::cout << "median one-step latent error " << latent_linearity_error(model, traj) << '\n';
    }
    return 0;
}

int cmd_config(const Options& opt) {
    std::cout << dump_config(resolve_config(opt));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Split Koopman autoencoder for wireless remote monitoring"};
    app.require_subcommand(1);
    app.fallthrough();

    Options opt;
    app.add_option("-c,--config", opt.config_path, "config file (key = value lines)")->check(CLI::ExistingFile);
    app.add_option("-o,--out", opt.out_dir, "output directory (default: $KOOPSPLIT_OUT_DIR or ./koopsplit_out)");
    app.add_flag("-q,--quiet", opt.quiet, "suppress progress output");
    for (const auto& key : config_keys()) {
        auto& slot = opt.overrides[key.name];
        app.add_option("--" + key.name, slot, key.help)->group("Config overrides");
    }

    auto* simulate = app.add_subcommand("simulate", "generate the cart-pole trajectory as CSV");
    auto* run = app.add_subcommand("run", "one two-phase monitoring run");
    auto* sweep = app.add_subcommand("sweep", "monitoring runs over q x P x T_P1 x seeds");
    auto* inspect = app.add_subcommand("inspect", "print a checkpoint's Koopman spectrum and statistics");
    inspect->add_option("checkpoint", opt.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    inspect->add_option("--trajectory", opt.trajectory, "trajectory CSV for the latent linearity diagnostic");
    auto* config = app.add_subcommand("config", "print the resolved configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*simulate) return cmd_simulate(opt);
        if (*run) return cmd_run(opt);
        if (*sweep) return cmd_sweep(opt);
        if (*inspect) return cmd_inspect(opt);
        if (*config) return cmd_config(opt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
