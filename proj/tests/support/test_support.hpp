#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "koopsplit/koopman_model.hpp"
#include "koopsplit/monitor.hpp"
#include "koopsplit/neural.hpp"
#include "koopsplit/split_training.hpp"

namespace koopsplit::testing {

using State4 = std::array<double, 4>;

// Cart-pole acceleration from the Lagrangian mass-matrix form
//   [M+m, mL cos][xdd]   [mL w^2 sin - delta v]
//   [mL cos, mL^2][thdd] = [-m g' L sin          ]
// with g' = -gravity (pendulum hanging down at theta = 0), solved by Cramer's rule.
State4 lagrangian_derivative(const State4& s, const CartPoleParams& p);

// Plain RK4 on std::array with a fixed step h; returns the state after `steps` steps.
State4 oracle_rk4(State4 s, const CartPoleParams& p, double h, long steps);

// Un-split reference trainer: one Adam over encoder, K and decoder, no channel.
class MonolithTrainer {
public:
    MonolithTrainer(SplitKoopmanModel prepared, const Trajectory& measurements, const TrainConfig& cfg);
    LossBreakdown step(std::span<const std::size_t> starts);
    const SplitKoopmanModel& model() const { return model_; }

private:
    SplitKoopmanModel model_;
    TrainConfig cfg_;
    Eigen::MatrixXd states_;  // normalized measurements
    Adam adam_;
};

// Deterministic random helpers for hand-rolled property tests.
struct Gen {
    explicit Gen(std::uint64_t seed) : rng(seed) {}
    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    Eigen::MatrixXd matrix(Eigen::Index r, Eigen::Index c, double scale = 1.0);
    Eigen::VectorXd vector(Eigen::Index n, double scale = 1.0);
    std::mt19937_64 rng;
};

// Short, small-network monitoring config for unit tests (a few seconds of phase 1).
MonitoringConfig small_monitoring_config(int latent_dim = 2);

// ||a - b|| / max(||a||, ||b||, floor).
double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-12);

Eigen::VectorXd flatten(std::span<const std::span<const double>> blocks);

}  // namespace koopsplit::testing
