#include <cmath>
#include <complex>
#include <vector>

#include <doctest.h>

#include "koopsplit/koopman_model.hpp"
#include "koopsplit/split_training.hpp"
#include "test_support.hpp"

using namespace koopsplit;
using koopsplit::testing::Gen;

namespace {

DenseNet linear_net(const Eigen::MatrixXd& w) {
    return DenseNet({DenseLayer{w, Eigen::VectorXd::Zero(w.rows()), Activation::linear}});
}

SplitKoopmanModel random_model(Gen& gen, int d, int q, std::vector<int> widths) {
    ModelShape shape;
    shape.state_dim = d;
    shape.latent_dim = q;
    shape.hidden_widths = std::move(widths);
    SplitKoopmanModel m = SplitKoopmanModel::create(shape, gen.rng);
    m.koopman = Eigen::MatrixXd::Identity(q, q) + 0.1 * gen.matrix(q, q);
    for (auto* net : {&m.encoder, &m.decoder})
        for (auto& l : net->layers()) l.bias = gen.vector(l.out_dim(), 0.3);
    return m;
}

WindowBatch random_batch(Gen& gen, Eigen::Index windows, int depth, int d, int q) {
    WindowBatch b;
    b.windows = windows;
    b.depth = depth;
    b.states = gen.matrix((depth + 1) * windows, d);
    b.latents = gen.matrix((depth + 1) * windows, q);
    return b;
}

}  // namespace

TEST_SUITE("koopman_model") {

TEST_CASE("koopman_advance with a diagonal K") {
    SplitKoopmanModel m;
    m.koopman = Eigen::Vector2d(0.5, 2.0).asDiagonal();
    const Eigen::VectorXd z = koopman_advance(m, Eigen::Vector2d(1, 1), 3);
    CHECK(z[0] == 0.125);
    CHECK(z[1] == 8.0);
    CHECK(koopman_advance(m, Eigen::Vector2d(3, 4), 0) == Eigen::Vector2d(3, 4));
}

TEST_CASE("spectrum of a rotation") {
    SplitKoopmanModel m;
    m.koopman = (Eigen::MatrixXd(2, 2) << 0, -1, 1, 0).finished();
    const auto ev = koopman_spectrum(m);
    REQUIRE(ev.size() == 2);
    for (const auto& l : ev) {
        CHECK(std::abs(l.real()) <= 1e-12);
        CHECK(std::abs(std::abs(l.imag()) - 1.0) <= 1e-12);
    }
    CHECK(spectral_radius(m) == doctest::Approx(1.0));
}

TEST_CASE("eigenvalue product and sum match determinant and trace") {
    Gen gen(5);
    for (int trial = 0; trial < 50; ++trial) {
        const int q = gen.uniform_int(1, 6);
        SplitKoopmanModel m;
        m.koopman = gen.matrix(q, q);
        std::complex<double> prod = 1.0, sum = 0.0;
        for (const auto& l : koopman_spectrum(m)) {
            prod *= l;
            sum += l;
        }
        const double det = m.koopman.fullPivLu().determinant();
        CHECK(prod.real() == doctest::Approx(det).epsilon(1e-9).scale(1.0));
        CHECK(std::abs(prod.imag()) <= 1e-9 * std::max(1.0, std::abs(det)));
        CHECK(sum.real() == doctest::Approx(m.koopman.trace()).epsilon(1e-9).scale(1.0));
    }
}

TEST_CASE("normalizer fit and round trip") {
    std::vector<StateVector> s{Eigen::Vector2d(1, 5), Eigen::Vector2d(3, 5), Eigen::Vector2d(5, 5)};
    const Normalizer n = Normalizer::fit(s);
    CHECK(n.mean[0] == 3.0);
    CHECK(n.scale[0] == doctest::Approx(std::sqrt(8.0 / 3.0)));
    CHECK(n.scale[1] == 1.0);  // zero spread
    Gen gen(1);
    const Eigen::MatrixXd x = gen.matrix(7, 2);
    CHECK((n.denormalize(n.normalize(x)) - x).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("create mirrors the encoder and starts from K = I") {
    Rng rng(2);
    ModelShape shape;
    shape.latent_dim = 3;
    const auto m = SplitKoopmanModel::create(shape, rng);
    CHECK(m.koopman == Eigen::MatrixXd::Identity(3, 3));
    REQUIRE(m.encoder.layers().size() == 4);
    CHECK(m.encoder.layers()[0].out_dim() == 128);
    CHECK(m.encoder.output_dim() == 3);
    CHECK(m.decoder.layers()[0].out_dim() == 32);
    CHECK(m.decoder.layers()[2].out_dim() == 128);
    CHECK(m.decoder.output_dim() == 4);
    CHECK(m.encoder.layers().back().activation == Activation::linear);
    CHECK(m.decoder.layers().back().activation == Activation::linear);
    CHECK(m.shape() == shape);
    CHECK_NOTHROW(m.validate());
}

TEST_CASE("encode and decode agree between row and vector forms") {
    Gen gen(3);
    auto m = random_model(gen, 4, 2, {8});
    const Eigen::MatrixXd x = gen.matrix(5, 4);
    const Eigen::MatrixXd z = encode(m, x);
    const Eigen::MatrixXd xr = decode(m, z);
    for (int i = 0; i < 5; ++i) {
        CHECK(encode(m, StateVector(x.row(i).transpose())) == Eigen::VectorXd(z.row(i).transpose()));
        CHECK(decode(m, Eigen::VectorXd(z.row(i).transpose())) == StateVector(xr.row(i).transpose()));
    }
    CHECK_THROWS_AS(encode(m, Eigen::MatrixXd(Eigen::MatrixXd::Zero(2, 3))), std::invalid_argument);
    CHECK_THROWS_AS(decode(m, Eigen::MatrixXd(Eigen::MatrixXd::Zero(2, 3))), std::invalid_argument);
}

TEST_CASE("refreshed latent scale gives unit-power latents") {
    Gen gen(4);
    auto m = random_model(gen, 4, 3, {16, 8});
    std::vector<StateVector> states;
    for (int i = 0; i < 300; ++i) states.push_back(gen.vector(4, 2.0));
    m.state_norm = Normalizer::fit(states);
    refresh_latent_scale(m, states);
    CHECK(m.latent_norm.mean == Eigen::VectorXd::Zero(3));
    Eigen::MatrixXd x(300, 4);
    for (int i = 0; i < 300; ++i) x.row(i) = states[static_cast<std::size_t>(i)].transpose();
    const Eigen::MatrixXd z = encode(m, x);
    for (int j = 0; j < 3; ++j) CHECK(z.col(j).squaredNorm() / 300 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("hand-computed losses for D = 1, q = 1, T_d = 1") {
    SplitKoopmanModel m;
    m.encoder = linear_net(Eigen::MatrixXd::Constant(1, 1, 2.0));
    m.koopman = Eigen::MatrixXd::Constant(1, 1, 0.5);
    m.decoder = linear_net(Eigen::MatrixXd::Identity(1, 1));
    m.state_norm = Normalizer::identity(1);
    m.latent_norm = Normalizer::identity(1);
    WindowBatch b;
    b.windows = 1;
    b.depth = 1;
    b.states = (Eigen::MatrixXd(2, 1) << 1, 2).finished();
    b.latents = (Eigen::MatrixXd(2, 1) << 2, 4).finished();
    // recon (1 - 2)^2 = 1; linear (4 - 0.5 * 2)^2 = 9; pred (2 - 1)^2 = 1
    const LossBreakdown l = compute_losses(m, b, LossWeights{});
    CHECK(l.reconstruction == 1.0);
    CHECK(l.linearity == 9.0);
    CHECK(l.prediction == 1.0);
    CHECK(l.overall == 11.0);
    const LossBreakdown w = compute_losses(m, b, LossWeights{0.5, 2.0, 0.0});
    CHECK(w.overall == 0.5 + 18.0);
}

TEST_CASE("loss weights mask components and overall is their weighted sum") {
    Gen gen(6);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = gen.uniform_int(1, 4), q = gen.uniform_int(1, 3), depth = gen.uniform_int(1, 4);
        auto m = random_model(gen, d, q, {6});
        const auto b = random_batch(gen, gen.uniform_int(1, 5), depth, d, q);
        const LossBreakdown full = compute_losses(m, b, LossWeights{});
        const LossWeights w{gen.uniform(0, 2), gen.uniform(0, 2), gen.uniform(0, 2)};
        const LossBreakdown l = compute_losses(m, b, w);
        CHECK(l.reconstruction == full.reconstruction);
        CHECK(std::abs(l.overall - (w.reconstruction * l.reconstruction + w.linearity * l.linearity +
                                    w.prediction * l.prediction)) <= 1e-12 * std::max(1.0, l.overall));
        CHECK(compute_losses(m, b, LossWeights{1, 0, 0}).overall == full.reconstruction);
        CHECK(compute_losses(m, b, LossWeights{0, 1, 0}).overall == full.linearity);
        CHECK(compute_losses(m, b, LossWeights{0, 0, 1}).overall == full.prediction);
    }
}

TEST_CASE("observer gradients match central differences") {
    Gen gen(9);
    for (int trial = 0; trial < 10; ++trial) {
        CAPTURE(trial);
        const int d = gen.uniform_int(1, 4), q = gen.uniform_int(1, 3), depth = gen.uniform_int(1, 4);
        auto m = random_model(gen, d, q, {gen.uniform_int(2, 8), gen.uniform_int(2, 8)});
        auto b = random_batch(gen, gen.uniform_int(1, 4), depth, d, q);
        const LossWeights w{gen.uniform(0.1, 2), gen.uniform(0.1, 2), gen.uniform(0.1, 2)};

        ObserverGradients g;
        compute_losses_with_gradients(m, b, w, g);

        std::vector<ParamBlock> blocks{{"K", {m.koopman.data(), static_cast<std::size_t>(m.koopman.size())}}};
        for (auto& p : m.decoder.parameter_blocks()) blocks.push_back(p);
        blocks.push_back({"z", {b.latents.data(), static_cast<std::size_t>(b.latents.size())}});
        const auto fd = finite_diff_grad([&] { return compute_losses(m, b, w).overall; }, blocks);

        std::vector<std::span<const double>> an{{g.koopman.data(), static_cast<std::size_t>(g.koopman.size())}};
        for (auto& s : g.decoder.blocks()) an.push_back(s);
        an.emplace_back(g.latents.data(), static_cast<std::size_t>(g.latents.size()));
        std::vector<std::span<const double>> fds;
        for (const auto& v : fd) fds.emplace_back(v.data(), static_cast<std::size_t>(v.size()));
        CHECK(koopsplit::testing::relative_error(koopsplit::testing::flatten(an), koopsplit::testing::flatten(fds)) <= 1e-4);
    }
}

TEST_CASE("batch shape errors are reported") {
    Gen gen(10);
    auto m = random_model(gen, 2, 2, {4});
    auto b = random_batch(gen, 3, 2, 2, 2);
    b.states.conservativeResize(b.states.rows() - 1, Eigen::NoChange);
    CHECK_THROWS_WITH_AS(compute_losses(m, b, LossWeights{}), doctest::Contains("window length"), std::invalid_argument);
    auto c = random_batch(gen, 3, 2, 2, 3);
    CHECK_THROWS_AS(compute_losses(m, c, LossWeights{}), std::invalid_argument);
}

TEST_CASE("latent linearity error is zero for an exactly linear encoding") {
    // x_{t+1} = A x_t with identity encoder and K = A
    const Eigen::Matrix2d a = (Eigen::Matrix2d() << 0.99, 0.05, -0.05, 0.99).finished();
    Trajectory traj;
    traj.states.push_back(Eigen::Vector2d(1, 0));
    for (int i = 0; i < 50; ++i) traj.states.push_back(a * traj.states.back());
    SplitKoopmanModel m;
    m.encoder = linear_net(Eigen::MatrixXd::Identity(2, 2));
    m.decoder = linear_net(Eigen::MatrixXd::Identity(2, 2));
    m.koopman = a;
    m.state_norm = Normalizer::identity(2);
    m.latent_norm = Normalizer::identity(2);
    CHECK(latent_linearity_error(m, traj) <= 1e-14);
    m.koopman = Eigen::Matrix2d::Identity();
    // |A x - x| / |A x| is the same for every step of a scaled rotation
    const double expected = (a - Eigen::Matrix2d::Identity()).col(0).norm() / (a.col(0).norm());
    CHECK(latent_linearity_error(m, traj) == doctest::Approx(expected).epsilon(1e-9));
}

}
