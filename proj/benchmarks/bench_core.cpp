#include <numeric>
#include <vector>

#include <benchmark/benchmark.h>

#include "koopsplit/channel.hpp"
#include "koopsplit/dynamics.hpp"
#include "koopsplit/koopman_model.hpp"
#include "koopsplit/split_training.hpp"

using namespace koopsplit;

namespace {

const StateVector kInitial = (StateVector(4) << 0.0, 0.0, 3.14, -0.5).finished();

DenseNet encoder_net(int q) {
    Rng rng(1);
    const std::vector<int> widths{128, 64, 32, q};
    return DenseNet::build(4, widths, Activation::relu, Activation::linear, rng);
}

void BM_DenseForward(benchmark::State& state) {
    const DenseNet net = encoder_net(2);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(state.range(0), 4);
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DenseForward)->Arg(128)->Arg(128 * 31);

void BM_DenseBackward(benchmark::State& state) {
    const DenseNet net = encoder_net(2);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(state.range(0), 4);
    ForwardCache cache;
    const Eigen::MatrixXd y = net.forward(x, &cache);
    const Eigen::MatrixXd g = Eigen::MatrixXd::Ones(y.rows(), y.cols());
    for (auto _ : state) benchmark::DoNotOptimize(net.backward(cache, g));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DenseBackward)->Arg(128)->Arg(128 * 31);

void BM_SplitTrainStep(benchmark::State& state) {
    const Trajectory traj = generate_trajectory(kInitial, 5000, 0.01, CartPoleParams{}, NoiseConfig{});
    ModelShape shape;
    shape.latent_dim = static_cast<int>(state.range(0));
    Rng rng(2);
    SplitKoopmanModel model = SplitKoopmanModel::create(shape, rng);
    prepare_model(model, traj);
    SplitTrainer trainer(model, traj, ChannelConfig{}, TrainConfig{}, 3, 4);
    std::vector<std::size_t> starts(128);
    std::iota(starts.begin(), starts.end(), std::size_t{0});
    for (auto _ : state) benchmark::DoNotOptimize(trainer.step(starts));
}
BENCHMARK(BM_SplitTrainStep)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Rk4Trajectory(benchmark::State& state) {
    for (auto _ : state)
        benchmark::DoNotOptimize(generate_trajectory(kInitial, static_cast<std::size_t>(state.range(0)), 0.01,
                                                     CartPoleParams{}, NoiseConfig{}));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Rk4Trajectory)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_LinkSendRows(benchmark::State& state) {
    Link link(ChannelConfig{}, 5);
    Eigen::MatrixXd rows = Eigen::MatrixXd::Random(128 * 31, 4);
    for (auto _ : state) {
        link.send_rows(rows);
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(state.iterations() * rows.rows());
}
BENCHMARK(BM_LinkSendRows);

}  // namespace

BENCHMARK_MAIN();
