#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>

#include <Eigen/Dense>

#include "koopsplit/channel.hpp"
#include "koopsplit/dynamics.hpp"
#include "koopsplit/koopman_model.hpp"
#include "koopsplit/split_training.hpp"

namespace koopsplit {

struct MonitoringConfig {
    double phase1_duration = 350.0;  // T_P1, s
    double phase2_duration = 10.0;   // T_P2, s
    double dt = 0.01;                // sampling interval, s
    int resync_interval = 0;         // phase-2 steps between fresh latents, 0 = never
    StateVector initial = (StateVector(4) << 0.0, 0.0, 3.14, -0.5).finished();
    CartPoleParams plant;
    double system_noise_variance = 0.0;
    ChannelConfig channel{10.0};
    TrainConfig train;
    ModelShape model;
    std::uint64_t seed = 1;

    std::size_t phase1_samples() const;
    std::size_t phase2_samples() const;
    void validate() const;

    bool operator==(const MonitoringConfig& other) const;
};

struct Phase1Output {
    SplitKoopmanModel model;
    TrainHistory history;
    Eigen::VectorXd last_latent;  // equalized latent of the final phase-1 state
    Trajectory truth;             // noiseless-channel ground truth over phase 1
    Rng plant_rng;                // plant noise stream, positioned at the end of phase 1
};

struct RmseReport {
    double rmse = 0.0;
    double rmse_db = 0.0;         // 20 log10(rmse), -inf when rmse == 0
    Eigen::VectorXd per_dim;
};

struct MonitoringResult {
    MonitoringConfig config;
    TrainHistory history;
    SplitKoopmanModel model;
    Trajectory truth;             // phase 2 ground truth
    Trajectory predicted;         // phase 2 observer predictions, same length
    RmseReport rmse;
    std::size_t phase2_transmissions = 0;
    double wall_s = 0.0;
};

double rmse_to_db(double rmse);

// Phase 1: simulate [0, T_P1), train over the channel, hand off the last latent.
// With `warm_start`, training continues from that model instead of a fresh one.
Phase1Output run_phase1(const MonitoringConfig& cfg,
                        const std::optional<SplitKoopmanModel>& warm_start = std::nullopt);

// x_{t+tau} = decode(K^tau z) for tau = 1..n_steps, advancing the latent once per step.
// Returns n_steps states with the first at time t0. Throws PredictionError on a
// non-finite prediction.
Trajectory predict_rollout(const SplitKoopmanModel& model, const Eigen::VectorXd& z_start,
                           std::size_t n_steps, double dt = 0.01, double t0 = 0.0);

RmseReport evaluate_rmse(const Trajectory& predicted, const Trajectory& truth);

// Phase 2: the plant keeps running silently while the observer rolls out from the handed
// off latent; every resync_interval steps the sensor sends one fresh latent.
MonitoringResult run_phase2(const Phase1Output& phase1, const MonitoringConfig& cfg);

MonitoringResult run_monitoring(const MonitoringConfig& cfg);

// `t,x,v,theta,omega,kind` rows for both trajectories (kind = truth | predicted).
void write_comparison_csv(std::ostream& os, const Trajectory& truth, const Trajectory& predicted);

}  // namespace koopsplit
