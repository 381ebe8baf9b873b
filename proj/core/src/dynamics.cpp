#include "koopsplit/dynamics.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "koopsplit/errors.hpp"

namespace koopsplit {

void CartPoleParams::validate() const {
    if (!(pendulum_mass > 0)) throw ConfigError("pendulum_mass_kg", "must be > 0");
    if (!(cart_mass > 0)) throw ConfigError("cart_mass_kg", "must be > 0");
    if (!(length > 0)) throw ConfigError("pendulum_length_m", "must be > 0");
    if (!(damping >= 0)) throw ConfigError("damping", "must be >= 0");
    if (!std::isfinite(gravity)) throw ConfigError("gravity", "must be finite");
}

void NoiseConfig::validate() const {
    if (!(variance >= 0) || !std::isfinite(variance))
        throw ConfigError("system_noise_variance", "must be finite and >= 0");
}

void Trajectory::validate() const {
    if (states.empty()) throw std::invalid_argument("trajectory is empty");
    if (!(dt > 0)) throw std::invalid_argument("trajectory dt must be > 0");
    const auto d = states.front().size();
    for (const auto& s : states)
        if (s.size() != d) throw std::invalid_argument("trajectory states differ in dimension");
}

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

StateVector cartpole_derivative(const StateVector& state, const CartPoleParams& p) {
    if (state.size() != 4)
        throw std::domain_error("cart-pole state must have 4 entries, got " +
                                std::to_string(state.size()));
    if (!state.allFinite()) throw std::domain_error("cart-pole state is not finite");

    const double v = state[1];
    const double theta = state[2];
    const double omega = state[3];
    const double m = p.pendulum_mass;
    const double M = p.cart_mass;
    const double L = p.length;
    const double s = std::sin(theta);
    const double c = std::cos(theta);

    const double denom = m * L * L * (M + m * (1.0 - c * c));
    // shared term: m L omega^2 sin(theta) - delta v
    const double coupling = m * L * omega * omega * s - p.damping * v;

    StateVector dx(4);
    dx[0] = v;
    dx[1] = (-m * m * L * L * p.gravity * c * s + m * L * L * coupling) / denom;
    dx[2] = omega;
    dx[3] = ((m + M) * m * p.gravity * L * s - m * L * c * coupling) / denom;
    return dx;
}

DerivativeFn cartpole_field(const CartPoleParams& params) {
    params.validate();
    return [params](const StateVector& x) { return cartpole_derivative(x, params); };
}

namespace {

void check_guard(const StateVector& s, double guard, double t) {
    if (!s.allFinite() || s.cwiseAbs().maxCoeff() > guard)
        throw IntegrationError("state exceeded overflow guard", t);
}

}  // namespace

StateVector rk4_advance(const DerivativeFn& field, StateVector state, double dt,
                        const IntegratorOptions& opts, double t_start) {
    if (!(dt > 0)) throw std::invalid_argument("dt must be > 0");
    if (!(opts.max_substep > 0)) throw std::invalid_argument("max_substep must be > 0");

    // 1e-9 slack so dt = 10 * max_substep does not round up to 11 substeps.
    const auto n = static_cast<long>(std::ceil(dt / opts.max_substep - 1e-9));
    const long substeps = n < 1 ? 1 : n;
    const double h = dt / static_cast<double>(substeps);

    for (long i = 0; i < substeps; ++i) {
        const StateVector k1 = field(state);
        const StateVector k2 = field(state + 0.5 * h * k1);
        const StateVector k3 = field(state + 0.5 * h * k2);
        const StateVector k4 = field(state + h * k3);
        state += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        check_guard(state, opts.overflow_guard, t_start + static_cast<double>(i + 1) * h);
    }
    return state;
}

StateVector integrate_step(const DerivativeFn& field, const StateVector& state, double dt,
                           const NoiseConfig& noise, Rng& rng, const IntegratorOptions& opts,
                           double t_start) {
    if (!state.allFinite()) throw std::domain_error("integrate_step: state is not finite");
    StateVector next = rk4_advance(field, state, dt, opts, t_start);
    if (noise.variance > 0) {
        std::normal_distribution<double> gauss(0.0, std::sqrt(noise.variance));
        for (Eigen::Index i = 0; i < next.size(); ++i) next[i] += gauss(rng);
    }
    return next;
}

StateVector integrate_step(const StateVector& state, double dt, const CartPoleParams& params,
                           const NoiseConfig& noise, Rng& rng, const IntegratorOptions& opts) {
    return integrate_step(cartpole_field(params), state, dt, noise, rng, opts);
}

Trajectory continue_trajectory(const DerivativeFn& field, const StateVector& initial,
                               std::size_t n_steps, double dt, double t0,
                               const NoiseConfig& noise, Rng& rng,
                               const IntegratorOptions& opts) {
    if (n_steps < 1) throw std::invalid_argument("trajectory needs n_steps >= 1");
    if (!(dt > 0)) throw std::invalid_argument("dt must be > 0");
    noise.validate();

    Trajectory traj;
    traj.dt = dt;
    traj.t0 = t0;
    traj.states.reserve(n_steps + 1);
    traj.states.push_back(initial);
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t = traj.time(k);
        try {
            traj.states.push_back(integrate_step(field, traj.states.back(), dt, noise, rng, opts, t));
        } catch (const IntegrationError& e) {
            throw IntegrationError("trajectory integration failed", e.time(), k);
        }
    }
    return traj;
}

Trajectory generate_trajectory(const DerivativeFn& field, const StateVector& initial,
                               std::size_t n_steps, double dt, const NoiseConfig& noise,
                               const IntegratorOptions& opts) {
    Rng rng(noise.seed);
    return continue_trajectory(field, initial, n_steps, dt, 0.0, noise, rng, opts);
}

Trajectory generate_trajectory(const StateVector& initial, std::size_t n_steps, double dt,
                               const CartPoleParams& params, const NoiseConfig& noise,
                               const IntegratorOptions& opts) {
    return generate_trajectory(cartpole_field(params), initial, n_steps, dt, noise, opts);
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    os << "t,x,v,theta,omega\n";
    for (std::size_t k = 0; k < traj.size(); ++k) {
        os << std::fixed << std::setprecision(6) << traj.time(k);
        os << std::defaultfloat << std::setprecision(17);
        for (Eigen::Index i = 0; i < traj.states[k].size(); ++i) os << ',' << traj.states[k][i];
        os << '\n';
    }
}

Trajectory read_trajectory_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("t,", 0) != 0)
        throw std::runtime_error("trajectory CSV: missing header");

    Trajectory traj;
    std::vector<double> times;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> values;
        while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
        if (values.size() < 2) throw std::runtime_error("trajectory CSV: short row");
        times.push_back(values.front());
        traj.states.emplace_back(Eigen::Map<const Eigen::VectorXd>(values.data() + 1,
                                                                   static_cast<Eigen::Index>(values.size() - 1)));
    }
    if (times.empty()) throw std::runtime_error("trajectory CSV: no rows");
    traj.t0 = times.front();
    if (times.size() > 1) traj.dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    traj.validate();
    return traj;
}

}  // namespace koopsplit
