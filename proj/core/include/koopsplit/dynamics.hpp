#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "koopsplit/random.hpp"

namespace koopsplit {

// Plant state x_t. For the cart-pole: [x (m), v (m/s), theta (rad), omega (rad/s)].
using StateVector = Eigen::VectorXd;

// Autonomous vector field dx/dt = f(x).
using DerivativeFn = std::function<StateVector(const StateVector&)>;

struct CartPoleParams {
    double pendulum_mass = 1.0;   // m, kg
    double cart_mass = 5.0;       // M, kg
    double length = 0.2;          // L, m
    double gravity = -10.0;       // g, m/s^2 (sign convention: theta = pi is the upright point)
    double damping = 1.0;         // delta, N s/m

    void validate() const;

    bool operator==(const CartPoleParams&) const = default;
};

// Additive Gaussian system noise applied after each sampling interval.
struct NoiseConfig {
    double variance = 0.0;  // N_s per dimension
    std::uint64_t seed = 0;

    void validate() const;
};

struct IntegratorOptions {
    double max_substep = 1e-3;      // RK4 substep inside one sampling interval
    double overflow_guard = 1e12;   // |entry| above this aborts integration
};

struct Trajectory {
    std::vector<StateVector> states;
    double dt = 0.01;
    double t0 = 0.0;

    std::size_t size() const { return states.size(); }
    Eigen::Index dim() const { return states.empty() ? 0 : states.front().size(); }
    double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }

    // Throws std::invalid_argument on empty, non-positive dt or ragged dimensions.
    void validate() const;
};

bool all_finite(const Eigen::VectorXd& v);

// Cart-pole vector field. Throws std::domain_error for a non-finite or wrong-sized state.
StateVector cartpole_derivative(const StateVector& state, const CartPoleParams& params);

DerivativeFn cartpole_field(const CartPoleParams& params);

// Classical RK4 over [t_start, t_start + dt] using ceil(dt / max_substep) equal substeps.
StateVector rk4_advance(const DerivativeFn& field, StateVector state, double dt,
                        const IntegratorOptions& opts = {}, double t_start = 0.0);

// One sampling interval: deterministic RK4 advance, then additive N(0, N_s) noise.
StateVector integrate_step(const DerivativeFn& field, const StateVector& state, double dt,
                           const NoiseConfig& noise, Rng& rng,
                           const IntegratorOptions& opts = {}, double t_start = 0.0);
StateVector integrate_step(const StateVector& state, double dt, const CartPoleParams& params,
                           const NoiseConfig& noise, Rng& rng,
                           const IntegratorOptions& opts = {});

// n_steps + 1 samples starting at `initial`. Noise stream is seeded from noise.seed.
Trajectory generate_trajectory(const DerivativeFn& field, const StateVector& initial,
                               std::size_t n_steps, double dt, const NoiseConfig& noise,
                               const IntegratorOptions& opts = {});
Trajectory generate_trajectory(const StateVector& initial, std::size_t n_steps, double dt,
                               const CartPoleParams& params, const NoiseConfig& noise,
                               const IntegratorOptions& opts = {});

// Same as generate_trajectory but continues an existing noise stream (used to extend a
// trajectory past the end of a previous call without re-seeding).
Trajectory continue_trajectory(const DerivativeFn& field, const StateVector& initial,
                               std::size_t n_steps, double dt, double t0,
                               const NoiseConfig& noise, Rng& rng,
                               const IntegratorOptions& opts = {});

// CSV with header `t,x,v,theta,omega`, t printed with 6 decimals.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
Trajectory read_trajectory_csv(std::istream& is);

}  // namespace koopsplit
