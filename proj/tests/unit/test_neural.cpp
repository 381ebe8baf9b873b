#include <cmath>
#include <vector>

#include <doctest.h>

#include "koopsplit/neural.hpp"
#include "test_support.hpp"

using namespace koopsplit;
using koopsplit::testing::Gen;

namespace {

DenseNet random_net(Gen& gen, Activation hidden) {
    const int depth = gen.uniform_int(1, 4);
    const int in = gen.uniform_int(1, 16);
    std::vector<int> widths;
    for (int i = 0; i < depth; ++i) widths.push_back(gen.uniform_int(1, 16));
    DenseNet net = DenseNet::build(in, widths, hidden, Activation::linear, gen.rng);
    // nonzero biases keep pre-activations off the ReLU kink (zero biases behind a dead layer
    // put them exactly on it)
    for (auto& l : net.layers()) l.bias = gen.vector(l.out_dim(), 0.3);
    return net;
}

}  // namespace

TEST_SUITE("neural") {

TEST_CASE("identity layer passes input through") {
    DenseNet net({DenseLayer{Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3), Activation::linear}});
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 3);
    CHECK(net.forward(x) == x);
}

TEST_CASE("relu clamps negatives") {
    DenseNet net({DenseLayer{Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3), Activation::relu}});
    const Eigen::VectorXd y = net.forward(Eigen::VectorXd((Eigen::VectorXd(3) << -1.0, 0.0, 2.5).finished()));
    CHECK(y == (Eigen::VectorXd(3) << 0.0, 0.0, 2.5).finished());
}

TEST_CASE("hand-computed two-layer network") {
    DenseLayer l1{(Eigen::MatrixXd(2, 2) << 1, -1, 2, 0).finished(), (Eigen::VectorXd(2) << 0, -1).finished(),
                  Activation::relu};
    DenseLayer l2{(Eigen::MatrixXd(1, 2) << 1, 1).finished(), Eigen::VectorXd::Constant(1, 0.5), Activation::linear};
    DenseNet net({l1, l2});
    // pre1 = [1 - 2, 2 - 1] = [-1, 1] -> relu [0, 1] -> 0 + 1 + 0.5
    const Eigen::VectorXd y = net.forward(Eigen::VectorXd((Eigen::VectorXd(2) << 1, 2).finished()));
    CHECK(y[0] == 1.5);
}

TEST_CASE("build shapes and init statistics") {
    Rng rng(4);
    const std::vector<int> widths{128, 64, 3};
    const DenseNet net = DenseNet::build(200, widths, Activation::relu, Activation::linear, rng);
    REQUIRE(net.layers().size() == 3);
    CHECK(net.input_dim() == 200);
    CHECK(net.output_dim() == 3);
    CHECK(net.parameter_count() == 200 * 128 + 128 + 128 * 64 + 64 + 64 * 3 + 3);
    // He init: weight variance 2 / fan_in
    const auto& w = net.layers()[0].weight;
    const double var = w.squaredNorm() / static_cast<double>(w.size());
    CHECK(var == doctest::Approx(2.0 / 200).epsilon(0.05));
    CHECK(net.layers()[0].activation == Activation::relu);
    CHECK(net.layers()[2].activation == Activation::linear);
}

TEST_CASE("backward matches central differences on random nets") {
    Gen gen(2024);
    for (int trial = 0; trial < 12; ++trial) {
        CAPTURE(trial);
        DenseNet net = random_net(gen, trial % 3 == 0 ? Activation::linear : Activation::relu);
        const Eigen::MatrixXd x = gen.matrix(gen.uniform_int(1, 6), net.input_dim());
        const Eigen::MatrixXd target = gen.matrix(x.rows(), net.output_dim());

        ForwardCache cache;
        const Eigen::MatrixXd y = net.forward(x, &cache);
        const BackwardResult br = net.backward(cache, mse_grad(y, target));
        const Eigen::VectorXd analytic = koopsplit::testing::flatten(br.params.blocks());

        const auto blocks = net.parameter_blocks();
        const auto fd = finite_diff_grad([&] { return mse(net.forward(x), target); }, blocks);
        std::vector<std::span<const double>> fd_spans;
        for (const auto& v : fd) fd_spans.emplace_back(v.data(), static_cast<std::size_t>(v.size()));
        CHECK(koopsplit::testing::relative_error(analytic, koopsplit::testing::flatten(fd_spans)) <= 1e-4);

        // input gradient through the flat-vector finite difference variant
        const Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
        const Eigen::VectorXd fd_in = finite_diff_grad(
            [&](const Eigen::VectorXd& p) {
                return mse(net.forward(Eigen::MatrixXd(Eigen::Map<const Eigen::MatrixXd>(p.data(), x.rows(), x.cols()))),
                           target);
            },
            x0);
        const Eigen::VectorXd an_in = Eigen::Map<const Eigen::VectorXd>(br.input_grad.data(), br.input_grad.size());
        CHECK(koopsplit::testing::relative_error(an_in, fd_in) <= 1e-4);
    }
}

TEST_CASE("relu derivative at zero is zero") {
    DenseNet net({DenseLayer{Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1), Activation::relu}});
    ForwardCache cache;
    const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 1);
    net.forward(x, &cache);
    const auto br = net.backward(cache, Eigen::MatrixXd::Ones(1, 1));
    CHECK(br.input_grad(0, 0) == 0.0);
    CHECK(br.params.weight[0](0, 0) == 0.0);
}

TEST_CASE("backward rejects a cache from another network") {
    Rng rng(1);
    const std::vector<int> widths{3};
    DenseNet a = DenseNet::build(2, widths, Activation::relu, Activation::linear, rng);
    DenseNet b = a;
    ForwardCache cache;
    a.forward(Eigen::MatrixXd::Ones(2, 2), &cache);
    CHECK_THROWS(b.backward(cache, Eigen::MatrixXd::Ones(2, 3)));
}

TEST_CASE("mse examples") {
    const Eigen::MatrixXd a = (Eigen::MatrixXd(2, 2) << 1, 2, 3, 4).finished();
    const Eigen::MatrixXd b = (Eigen::MatrixXd(2, 2) << 1, 0, 3, 0).finished();
    CHECK(mse(a, b) == doctest::Approx((4.0 + 16.0) / 4));
    CHECK(mse(a, a) == 0.0);
    const Eigen::MatrixXd g = mse_grad(a, b);
    CHECK(g(0, 1) == doctest::Approx(2.0 * 2 / 4));
    CHECK(g(1, 0) == 0.0);
}

TEST_CASE("Adam first step moves each parameter by the learning rate") {
    Eigen::VectorXd p = (Eigen::VectorXd(3) << 1.0, -2.0, 0.5).finished();
    const Eigen::VectorXd g = (Eigen::VectorXd(3) << 0.5, -3.0, 0.0).finished();
    Adam adam;
    std::vector<ParamBlock> blocks{{"p", {p.data(), 3}}};
    std::vector<std::span<const double>> grads{{g.data(), 3}};
    adam.step(blocks, grads);
    CHECK(std::abs((p[0] - 1.0) + 0.001) <= 1e-9);
    CHECK(std::abs((p[1] + 2.0) - 0.001) <= 1e-9);
    CHECK(p[2] == 0.5);  // zero gradient leaves the parameter alone
    CHECK(adam.steps() == 1);
}

TEST_CASE("Adam matches a scalar reference over several steps") {
    Gen gen(8);
    Eigen::VectorXd p = gen.vector(5);
    Eigen::VectorXd ref = p;
    Eigen::VectorXd m = Eigen::VectorXd::Zero(5), v = Eigen::VectorXd::Zero(5);
    Adam adam(AdamConfig{0.01, 0.8, 0.99, 1e-6});
    for (int t = 1; t <= 10; ++t) {
        const Eigen::VectorXd g = gen.vector(5);
        std::vector<ParamBlock> blocks{{"p", {p.data(), 5}}};
        std::vector<std::span<const double>> grads{{g.data(), 5}};
        adam.step(blocks, grads);
        for (int i = 0; i < 5; ++i) {
            m[i] = 0.8 * m[i] + 0.2 * g[i];
            v[i] = 0.99 * v[i] + 0.01 * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(0.8, t));
            const double vh = v[i] / (1 - std::pow(0.99, t));
            ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-6);
        }
    }
    for (int i = 0; i < 5; ++i) CHECK(p[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("Adam refuses non-finite gradients without touching parameters") {
    Eigen::VectorXd p = Eigen::VectorXd::Ones(2);
    const Eigen::VectorXd g = (Eigen::VectorXd(2) << 1.0, NAN).finished();
    Adam adam;
    std::vector<ParamBlock> blocks{{"decoder.W0", {p.data(), 2}}};
    std::vector<std::span<const double>> grads{{g.data(), 2}};
    CHECK_THROWS_WITH_AS(adam.step(blocks, grads), doctest::Contains("decoder.W0"), std::domain_error);
    CHECK(p == Eigen::VectorXd::Ones(2));
}

TEST_CASE("zero gradients are zero and shaped like the parameters") {
    Rng rng(3);
    const std::vector<int> widths{4, 2};
    const DenseNet net = DenseNet::build(3, widths, Activation::relu, Activation::linear, rng);
    const NetGradients z = net.zero_gradients();
    CHECK(z.is_zero());
    CHECK(koopsplit::testing::flatten(z.blocks()).size() == static_cast<Eigen::Index>(net.parameter_count()));
}

TEST_CASE("build is deterministic in the rng") {
    const std::vector<int> widths{8, 8, 2};
    Rng r1(10), r2(10), r3(11);
    const DenseNet a = DenseNet::build(4, widths, Activation::relu, Activation::linear, r1);
    const DenseNet b = DenseNet::build(4, widths, Activation::relu, Activation::linear, r2);
    const DenseNet c = DenseNet::build(4, widths, Activation::relu, Activation::linear, r3);
    CHECK(a == b);
    CHECK_FALSE(a == c);
}

}
