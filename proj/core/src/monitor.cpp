#include "koopsplit/monitor.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "koopsplit/errors.hpp"

namespace koopsplit {

std::size_t MonitoringConfig::phase1_samples() const {
    return static_cast<std::size_t>(std::llround(phase1_duration / dt));
}

std::size_t MonitoringConfig::phase2_samples() const {
    return static_cast<std::size_t>(std::llround(phase2_duration / dt));
}

bool MonitoringConfig::operator==(const MonitoringConfig& o) const {
    return phase1_duration == o.phase1_duration && phase2_duration == o.phase2_duration &&
           dt == o.dt && resync_interval == o.resync_interval && initial.size() == o.initial.size() &&
           initial == o.initial && plant == o.plant &&
           system_noise_variance == o.system_noise_variance && channel == o.channel &&
           train == o.train && model == o.model && seed == o.seed;
}

void MonitoringConfig::validate() const {
    if (!(dt > 0)) throw ConfigError("dt_s", "must be > 0");
    if (!(phase1_duration > 0)) throw ConfigError("phase1_s", "must be > 0");
    if (!(phase2_duration > 0)) throw ConfigError("phase2_s", "must be > 0");
    if (phase2_samples() < 1) throw ConfigError("phase2_s", "shorter than one sampling interval");
    if (resync_interval < 0) throw ConfigError("resync_interval", "must be >= 0");
    if (initial.size() != 4 || !initial.allFinite())
        throw ConfigError("initial_state", "must be 4 finite values");
    if (!(system_noise_variance >= 0)) throw ConfigError("system_noise_variance", "must be >= 0");
    if (model.state_dim != 4) throw ConfigError("state_dim", "the cart-pole plant has 4 states");
    if (model.latent_dim < 1) throw ConfigError("latent_dim", "must be >= 1");
    for (int w : model.hidden_widths)
        if (w < 1) throw ConfigError("hidden_widths", "must be >= 1");
    plant.validate();
    channel.validate();
    train.validate();
}

double rmse_to_db(double rmse) {
    if (rmse == 0.0) return -std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(rmse);
}

Phase1Output run_phase1(const MonitoringConfig& cfg, const std::optional<SplitKoopmanModel>& warm_start) {
    cfg.validate();
    const std::size_t n1 = cfg.phase1_samples();
    if (n1 < 2) throw ConfigError("phase1_s", "shorter than two sampling intervals");

    Phase1Output out;
    const NoiseConfig noise{cfg.system_noise_variance, derive_seed(cfg.seed, "plant")};
    out.plant_rng = Rng(noise.seed);
    out.truth = continue_trajectory(cartpole_field(cfg.plant), cfg.initial, n1 - 1, cfg.dt, 0.0,
                                    noise, out.plant_rng);

    SplitKoopmanModel model;
    if (warm_start) {
        model = *warm_start;
    } else {
        Rng init_rng = make_rng(cfg.seed, "init");
        ModelShape shape = cfg.model;
        shape.state_dim = static_cast<int>(out.truth.dim());
        model = SplitKoopmanModel::create(shape, init_rng);
        prepare_model(model, out.truth);
    }

    ChannelConfig channel = cfg.channel;
    channel.seed = derive_seed(cfg.seed, "channel");
    Rng train_rng = make_rng(cfg.seed, "train");
    TrainResult trained = train(std::move(model), out.truth, channel, cfg.train, train_rng);
    out.model = std::move(trained.model);
    out.history = std::move(trained.history);

    Link handoff(channel, derive_seed(cfg.seed, "handoff"));
    out.last_latent = handoff.send(encode(out.model, out.truth.states.back())).values;
    return out;
}

Trajectory predict_rollout(const SplitKoopmanModel& model, const Eigen::VectorXd& z_start,
                           std::size_t n_steps, double dt, double t0) {
    if (n_steps < 1) throw std::invalid_argument("predict_rollout: n_steps must be >= 1");
    if (z_start.size() != model.latent_dim()) throw std::invalid_argument("predict_rollout: latent size");

    Trajectory out;
    out.dt = dt;
    out.t0 = t0;
    out.states.reserve(n_steps);
    Eigen::VectorXd z = z_start;
    for (std::size_t k = 0; k < n_steps; ++k) {
        z = model.koopman * z;
        // decoded one step at a time: a batched decode would round differently depending on
        // n_steps, and a rollout must be a prefix of any longer one
        StateVector x = decode(model, z);
        if (!z.allFinite() || !x.allFinite()) throw PredictionError(k + 1, spectral_radius(model));
        out.states.push_back(std::move(x));
    }
    return out;
}

RmseReport evaluate_rmse(const Trajectory& predicted, const Trajectory& truth) {
    if (predicted.size() != truth.size() || predicted.size() == 0)
        throw std::invalid_argument("evaluate_rmse: trajectories differ in length (" +
                                    std::to_string(predicted.size()) + " vs " +
                                    std::to_string(truth.size()) + ")");
    if (predicted.dim() != truth.dim()) throw std::invalid_argument("evaluate_rmse: dimension mismatch");

    Eigen::VectorXd sq = Eigen::VectorXd::Zero(truth.dim());
    for (std::size_t k = 0; k < truth.size(); ++k) {
        if (predicted.states[k].size() != truth.dim() || truth.states[k].size() != truth.dim())
            throw std::invalid_argument("evaluate_rmse: ragged trajectory");
        sq += (truth.states[k] - predicted.states[k]).cwiseAbs2();
    }
    const auto steps = static_cast<double>(truth.size());
    RmseReport r;
    r.per_dim = (sq / steps).cwiseSqrt();
    r.rmse = std::sqrt(sq.sum() / (steps * static_cast<double>(truth.dim())));
    r.rmse_db = rmse_to_db(r.rmse);
    return r;
}

MonitoringResult run_phase2(const Phase1Output& phase1, const MonitoringConfig& cfg) {
    cfg.validate();
    const std::size_t n1 = phase1.truth.size();
    const std::size_t n2 = cfg.phase2_samples();

    MonitoringResult res;
    res.config = cfg;
    res.history = phase1.history;
    res.model = phase1.model;

    // the plant keeps evolving; nothing is transmitted for it
    const NoiseConfig noise{cfg.system_noise_variance, 0};
    Rng plant_rng = phase1.plant_rng;
    Trajectory cont = continue_trajectory(cartpole_field(cfg.plant), phase1.truth.states.back(), n2,
                                          cfg.dt, phase1.truth.time(n1 - 1), noise, plant_rng);
    res.truth.dt = cfg.dt;
    res.truth.t0 = phase1.truth.time(n1 - 1) + cfg.dt;
    res.truth.states.assign(cont.states.begin() + 1, cont.states.end());

    ChannelConfig channel = cfg.channel;
    Link link(channel, derive_seed(cfg.seed, "phase2"));

    res.predicted.dt = cfg.dt;
    res.predicted.t0 = res.truth.t0;
    res.predicted.states.reserve(n2);
    const std::size_t segment = cfg.resync_interval > 0 ? static_cast<std::size_t>(cfg.resync_interval) : n2;
    Eigen::VectorXd z = phase1.last_latent;
    for (std::size_t done = 0; done < n2;) {
        if (done > 0) {
            // fresh latent of the most recent true state re-initializes the rollout
            const StateVector& latest = res.truth.states[done - 1];
            z = link.send(encode(res.model, latest)).values;
        }
        const std::size_t len = std::min(segment, n2 - done);
        const Trajectory part = predict_rollout(res.model, z, len, cfg.dt, res.truth.time(done));
        res.predicted.states.insert(res.predicted.states.end(), part.states.begin(), part.states.end());
        done += len;
    }
    res.phase2_transmissions = link.transmissions();
    res.rmse = evaluate_rmse(res.predicted, res.truth);
    return res;
}

MonitoringResult run_monitoring(const MonitoringConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    const Phase1Output p1 = run_phase1(cfg);
    MonitoringResult res = run_phase2(p1, cfg);
    res.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

void write_comparison_csv(std::ostream& os, const Trajectory& truth, const Trajectory& predicted) {
    os << "t,x,v,theta,omega,kind\n";
    auto rows = [&os](const Trajectory& traj, const char* kind) {
        for (std::size_t k = 0; k < traj.size(); ++k) {
            os << std::fixed << std::setprecision(6) << traj.time(k) << std::defaultfloat
               << std::setprecision(17);
            for (Eigen::Index i = 0; i < traj.states[k].size(); ++i) os << ',' << traj.states[k][i];
            os << ',' << kind << '\n';
        }
    };
    rows(truth, "truth");
    rows(predicted, "predicted");
}

}  // namespace koopsplit
