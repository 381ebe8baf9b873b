#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "koopsplit/random.hpp"

namespace koopsplit {

enum class Activation : std::uint8_t { relu = 0, linear = 1 };

const char* to_string(Activation a);

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
    Activation activation = Activation::linear;

    Eigen::Index in_dim() const { return weight.cols(); }
    Eigen::Index out_dim() const { return weight.rows(); }
};

// Named view of one contiguous parameter block, used by the optimizer and gradient checks.
struct ParamBlock {
    std::string name;
    std::span<double> values;
};

struct NetGradients {
    std::vector<Eigen::MatrixXd> weight;
    std::vector<Eigen::VectorXd> bias;

    // Blocks in the same order as DenseNet::parameter_blocks().
    std::vector<std::span<const double>> blocks() const;
    bool is_zero() const;
};

class DenseNet;

// Activations retained by forward() for the matching backward() call.
struct ForwardCache {
    const DenseNet* owner = nullptr;
    std::uint64_t owner_id = 0;
    std::vector<Eigen::MatrixXd> inputs;  // input to layer k (rows = samples)
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of layer k
};

struct BackwardResult {
    NetGradients params;
    Eigen::MatrixXd input_grad;
};

// Fully-connected chain operating on row-major batches (one sample per row).
class DenseNet {
public:
    DenseNet();
    explicit DenseNet(std::vector<DenseLayer> layers);
    DenseNet(const DenseNet& other);
    DenseNet& operator=(const DenseNet& other);
    DenseNet(DenseNet&&) noexcept;
    DenseNet& operator=(DenseNet&&) noexcept;
    ~DenseNet() = default;

    // widths lists every layer's output size. Hidden layers use `hidden`, the last `output`.
    // Weights: He (var 2/fan_in) for relu layers, Xavier-style (var 1/fan_in) for linear.
    static DenseNet build(int input_dim, std::span<const int> widths, Activation hidden,
                          Activation output, Rng& rng);

    Eigen::MatrixXd forward(const Eigen::MatrixXd& input, ForwardCache* cache = nullptr) const;
    Eigen::VectorXd forward(const Eigen::VectorXd& input) const;

    // Reverse-mode pass for d(loss)/d(output) = output_grad. ReLU'(0) is taken as 0.
    BackwardResult backward(const ForwardCache& cache, const Eigen::MatrixXd& output_grad) const;

    std::vector<ParamBlock> parameter_blocks(const std::string& prefix = "");
    std::size_t parameter_count() const;

    NetGradients zero_gradients() const;

    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }
    Eigen::Index input_dim() const;
    Eigen::Index output_dim() const;
    bool empty() const { return layers_.empty(); }
    bool all_finite() const;

    bool operator==(const DenseNet& other) const;

private:
    void check_chain() const;

    std::vector<DenseLayer> layers_;
    std::uint64_t id_;
};

// Mean over all elements of (a - b)^2.
double mse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// d mse(a, b) / d a.
Eigen::MatrixXd mse_grad(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

// Adam with bias-corrected moments. Moment buffers are allocated on the first step and
// must keep matching block sizes afterwards.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {});

    // Throws std::domain_error naming the block if any gradient entry is non-finite;
    // nothing is modified in that case.
    void step(std::span<const ParamBlock> params, std::span<const std::span<const double>> grads);

    std::int64_t steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    const std::vector<Eigen::VectorXd>& first_moments() const { return m_; }
    const std::vector<Eigen::VectorXd>& second_moments() const { return v_; }

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<Eigen::VectorXd> m_;
    std::vector<Eigen::VectorXd> v_;
};

// Central differences, one coordinate at a time.
Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd&)>& loss,
                                 const Eigen::VectorXd& params, double step = 1e-5);

// Same, perturbing the given blocks in place and restoring them afterwards.
std::vector<Eigen::VectorXd> finite_diff_grad(const std::function<double()>& loss,
                                              std::span<const ParamBlock> params,
                                              double step = 1e-5);

}  // namespace koopsplit
