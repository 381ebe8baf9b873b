#include <cmath>
#include <numbers>
#include <sstream>

#include <doctest.h>

#include "koopsplit/dynamics.hpp"
#include "koopsplit/errors.hpp"
#include "test_support.hpp"

using namespace koopsplit;
using koopsplit::testing::State4;

namespace {

StateVector vec4(double a, double b, double c, double d) { return (StateVector(4) << a, b, c, d).finished(); }

double max_diff(const StateVector& a, const State4& b) {
    double m = 0;
    for (int i = 0; i < 4; ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("derivative vanishes at both equilibria") {
    const CartPoleParams p;
    for (double theta : {0.0, std::numbers::pi}) {
        const StateVector d = cartpole_derivative(vec4(0.7, 0.0, theta, 0.0), p);
        CHECK(d.cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("derivative matches the mass-matrix form on random states") {
    koopsplit::testing::Gen gen(11);
    for (int trial = 0; trial < 200; ++trial) {
        CartPoleParams p;
        p.pendulum_mass = gen.uniform(0.2, 3.0);
        p.cart_mass = gen.uniform(0.5, 10.0);
        p.length = gen.uniform(0.1, 2.0);
        p.gravity = gen.uniform(-15.0, 15.0);
        p.damping = gen.uniform(0.0, 3.0);
        const State4 s{gen.uniform(-5, 5), gen.uniform(-5, 5), gen.uniform(-10, 10), gen.uniform(-8, 8)};
        const StateVector d = cartpole_derivative(vec4(s[0], s[1], s[2], s[3]), p);
        const State4 o = koopsplit::testing::lagrangian_derivative(s, p);
        for (int i = 0; i < 4; ++i) CHECK(d[i] == doctest::Approx(o[i]).epsilon(1e-10).scale(1.0));
    }
}

TEST_CASE("theta = 0 is stable and theta = pi unstable for the default gravity sign") {
    const CartPoleParams p;
    // small tilt: near theta = 0 the angular acceleration opposes the tilt
    CHECK(cartpole_derivative(vec4(0, 0, 0.01, 0), p)[3] < 0);
    CHECK(cartpole_derivative(vec4(0, 0, std::numbers::pi + 0.01, 0), p)[3] > 0);
}

TEST_CASE("derivative rejects bad input") {
    const CartPoleParams p;
    CHECK_THROWS_AS(cartpole_derivative(StateVector::Zero(3), p), std::domain_error);
    CHECK_THROWS_AS(cartpole_derivative(vec4(0, 0, NAN, 0), p), std::domain_error);
}

TEST_CASE("RK4 trajectory over 350 s matches a fine-step oracle") {
    const CartPoleParams p;
    const StateVector x0 = vec4(0, 0, 3.14, -0.5);
    const Trajectory traj = generate_trajectory(x0, 35000, 0.01, p, NoiseConfig{});
    REQUIRE(traj.size() == 35001);
    const State4 ref = koopsplit::testing::oracle_rk4({0, 0, 3.14, -0.5}, p, 1e-5, 35'000'000);
    CHECK(max_diff(traj.states.back(), ref) <= 1e-6);
}

TEST_CASE("RK4 convergence order is four") {
    // short horizon: over longer ones the unstable upright point amplifies the error and
    // hides the asymptotic regime
    const CartPoleParams p;
    const State4 s0{0, 0, 3.14, -0.5};
    const double horizon = 0.2;
    const State4 ref = koopsplit::testing::oracle_rk4(s0, p, 1e-5, 20000);
    const std::vector<double> steps{0.02, 0.01, 0.005, 0.0025};
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (double h : steps) {
        IntegratorOptions opts;
        opts.max_substep = h;
        const StateVector x = rk4_advance(cartpole_field(p), vec4(s0[0], s0[1], s0[2], s0[3]), horizon, opts);
        const double lx = std::log(h), ly = std::log(max_diff(x, ref));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double n = static_cast<double>(steps.size());
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope == doctest::Approx(4.0).epsilon(0.3 / 4.0));
}

TEST_CASE("substep count rounds up") {
    // dt = 0.01 with max_substep 0.003 must take 4 equal substeps of 0.0025
    const CartPoleParams p;
    IntegratorOptions opts;
    opts.max_substep = 0.003;
    const StateVector x = rk4_advance(cartpole_field(p), vec4(0, 0, 3.0, 0.2), 0.01, opts);
    const State4 ref = koopsplit::testing::oracle_rk4({0, 0, 3.0, 0.2}, p, 0.0025, 4);
    CHECK(max_diff(x, ref) <= 1e-14);
}

TEST_CASE("rest state at an equilibrium stays put") {
    const Trajectory traj = generate_trajectory(vec4(1.5, 0, 0, 0), 1000, 0.01, CartPoleParams{}, NoiseConfig{});
    for (const auto& s : traj.states) CHECK(std::abs(s[0] - 1.5) + s.tail(3).cwiseAbs().sum() <= 1e-12);
}

TEST_CASE("additive system noise has the configured variance") {
    // the hanging rest point is a fixed point, so one-step increments are pure noise
    const CartPoleParams p;
    NoiseConfig noise{0.04, 99};
    Rng rng(99);
    const StateVector rest = vec4(0, 0, 0, 0);
    const auto field = cartpole_field(p);
    const int n = 40000;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(4), sq = Eigen::VectorXd::Zero(4);
    for (int i = 0; i < n; ++i) {
        const StateVector d = integrate_step(field, rest, 0.01, noise, rng) - rest;
        sum += d;
        sq += d.cwiseProduct(d);
    }
    const Eigen::VectorXd var = sq / n - (sum / n).cwiseProduct(sum / n);
    for (int i = 0; i < 4; ++i) CHECK(var[i] == doctest::Approx(0.04).epsilon(0.03));
}

TEST_CASE("same seed gives bitwise identical trajectories") {
    const NoiseConfig noise{1e-4, 5};
    const auto a = generate_trajectory(vec4(0, 0, 3.14, -0.5), 500, 0.01, CartPoleParams{}, noise);
    const auto b = generate_trajectory(vec4(0, 0, 3.14, -0.5), 500, 0.01, CartPoleParams{}, noise);
    const auto c = generate_trajectory(vec4(0, 0, 3.14, -0.5), 500, 0.01, CartPoleParams{}, NoiseConfig{1e-4, 6});
    CHECK(a.states == b.states);
    CHECK(a.states != c.states);
}

TEST_CASE("continue_trajectory extends a run seamlessly") {
    const auto field = cartpole_field(CartPoleParams{});
    const NoiseConfig noise{1e-4, 3};
    const auto whole = generate_trajectory(field, vec4(0, 0, 3.14, -0.5), 200, 0.01, noise);
    Rng rng(noise.seed);
    const auto first = continue_trajectory(field, vec4(0, 0, 3.14, -0.5), 120, 0.01, 0.0, noise, rng);
    const auto rest = continue_trajectory(field, first.states.back(), 80, 0.01, first.time(120), noise, rng);
    CHECK(rest.states.back() == whole.states.back());
    CHECK(rest.t0 == doctest::Approx(1.2));
}

TEST_CASE("overflow guard aborts a diverging integration") {
    const DerivativeFn blowup = [](const StateVector& x) -> StateVector { return x * 50.0; };
    IntegratorOptions opts;
    opts.overflow_guard = 1e6;
    CHECK_THROWS_AS(generate_trajectory(blowup, vec4(1, 1, 1, 1), 100, 0.1, NoiseConfig{}, opts), IntegrationError);
}

TEST_CASE("CSV round trip preserves states exactly") {
    const auto traj = generate_trajectory(vec4(0, 0, 3.14, -0.5), 50, 0.01, CartPoleParams{}, NoiseConfig{1e-3, 1});
    std::stringstream ss;
    write_trajectory_csv(ss, traj);
    std::string header;
    std::getline(ss, header);
    CHECK(header == "t,x,v,theta,omega");
    ss.seekg(0);
    const Trajectory back = read_trajectory_csv(ss);
    REQUIRE(back.size() == traj.size());
    CHECK(back.states == traj.states);
    CHECK(back.dt == doctest::Approx(0.01));
}

TEST_CASE("parameter validation") {
    CartPoleParams p;
    p.length = 0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.damping = -1;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

}
