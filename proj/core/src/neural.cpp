#include "koopsplit/neural.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace koopsplit {

namespace {

std::uint64_t next_net_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace

const char* to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::linear: return "linear";
    }
    return "unknown";
}

std::vector<std::span<const double>> NetGradients::blocks() const {
    std::vector<std::span<const double>> out;
    out.reserve(weight.size() * 2);
    for (std::size_t k = 0; k < weight.size(); ++k) {
        out.emplace_back(weight[k].data(), static_cast<std::size_t>(weight[k].size()));
        out.emplace_back(bias[k].data(), static_cast<std::size_t>(bias[k].size()));
    }
    return out;
}

bool NetGradients::is_zero() const {
    for (const auto& w : weight)
        if (!w.isZero(0.0)) return false;
    for (const auto& b : bias)
        if (!b.isZero(0.0)) return false;
    return true;
}

DenseNet::DenseNet() : id_(next_net_id()) {}

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)), id_(next_net_id()) {
    check_chain();
}

DenseNet::DenseNet(const DenseNet& other) : layers_(other.layers_), id_(next_net_id()) {}

DenseNet& DenseNet::operator=(const DenseNet& other) {
    if (this != &other) {
        layers_ = other.layers_;
        id_ = next_net_id();
    }
    return *this;
}

DenseNet::DenseNet(DenseNet&& other) noexcept : layers_(std::move(other.layers_)), id_(next_net_id()) {}

DenseNet& DenseNet::operator=(DenseNet&& other) noexcept {
    layers_ = std::move(other.layers_);
    id_ = next_net_id();
    return *this;
}

void DenseNet::check_chain() const {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const auto& l = layers_[k];
        if (l.bias.size() != l.weight.rows())
            throw std::invalid_argument("layer " + std::to_string(k) + ": bias size mismatch");
        if (k > 0 && layers_[k - 1].out_dim() != l.in_dim())
            throw std::invalid_argument("layer " + std::to_string(k) + ": input dim " +
                                        std::to_string(l.in_dim()) + " != previous output dim " +
                                        std::to_string(layers_[k - 1].out_dim()));
    }
}

DenseNet DenseNet::build(int input_dim, std::span<const int> widths, Activation hidden,
                         Activation output, Rng& rng) {
    if (input_dim < 1 || widths.empty()) throw std::invalid_argument("DenseNet::build: empty shape");
    std::vector<DenseLayer> layers;
    int fan_in = input_dim;
    for (std::size_t k = 0; k < widths.size(); ++k) {
        if (widths[k] < 1) throw std::invalid_argument("DenseNet::build: width must be >= 1");
        DenseLayer layer;
        layer.activation = (k + 1 == widths.size()) ? output : hidden;
        const double var = (layer.activation == Activation::relu ? 2.0 : 1.0) / fan_in;
        std::normal_distribution<double> gauss(0.0, std::sqrt(var));
        layer.weight.resize(widths[k], fan_in);
        // fill row-major so the draw order does not depend on Eigen's storage order
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = gauss(rng);
        layer.bias = Eigen::VectorXd::Zero(widths[k]);
        layers.push_back(std::move(layer));
        fan_in = widths[k];
    }
    return DenseNet(std::move(layers));
}

Eigen::Index DenseNet::input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
Eigen::Index DenseNet::output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

bool DenseNet::all_finite() const {
    for (const auto& l : layers_)
        if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
}

bool DenseNet::operator==(const DenseNet& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const auto& a = layers_[k];
        const auto& b = other.layers_[k];
        if (a.activation != b.activation || a.weight.rows() != b.weight.rows() ||
            a.weight.cols() != b.weight.cols() || a.weight != b.weight || a.bias != b.bias)
            return false;
    }
    return true;
}

Eigen::MatrixXd DenseNet::forward(const Eigen::MatrixXd& input, ForwardCache* cache) const {
    if (layers_.empty()) throw std::logic_error("DenseNet::forward on empty net");
    if (input.cols() != input_dim())
        throw std::invalid_argument("DenseNet::forward: input has " + std::to_string(input.cols()) +
                                    " columns, net expects " + std::to_string(input_dim()));
    if (cache) {
        cache->owner = this;
        cache->owner_id = id_;
        cache->inputs.resize(layers_.size());
        cache->pre.resize(layers_.size());
    }

    Eigen::MatrixXd x = input;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const auto& l = layers_[k];
        Eigen::MatrixXd a = x * l.weight.transpose();
        a.rowwise() += l.bias.transpose();
        if (cache) {
            cache->inputs[k] = std::move(x);
            cache->pre[k] = a;
        }
        x = (l.activation == Activation::relu) ? Eigen::MatrixXd(a.cwiseMax(0.0)) : std::move(a);
    }
    return x;
}

Eigen::VectorXd DenseNet::forward(const Eigen::VectorXd& input) const {
    Eigen::MatrixXd row = input.transpose();
    return forward(row).row(0).transpose();
}

BackwardResult DenseNet::backward(const ForwardCache& cache, const Eigen::MatrixXd& output_grad) const {
    if (cache.owner != this || cache.owner_id != id_ || cache.pre.size() != layers_.size())
        throw std::logic_error("DenseNet::backward: cache was not produced by this net");
    const Eigen::Index batch = cache.inputs.front().rows();
    if (output_grad.rows() != batch || output_grad.cols() != output_dim())
        throw std::invalid_argument("DenseNet::backward: output gradient shape mismatch");

    BackwardResult out;
    out.params.weight.resize(layers_.size());
    out.params.bias.resize(layers_.size());

    Eigen::MatrixXd grad = output_grad;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        const auto& l = layers_[i];
        if (cache.pre[i].rows() != batch || cache.pre[i].cols() != l.out_dim())
            throw std::logic_error("DenseNet::backward: stale cache");
        if (l.activation == Activation::relu)
            grad = (cache.pre[i].array() > 0.0).select(grad, 0.0);
        out.params.weight[i].noalias() = grad.transpose() * cache.inputs[i];
        out.params.bias[i] = grad.colwise().sum().transpose();
        Eigen::MatrixXd next = grad * l.weight;
        grad = std::move(next);
    }
    out.input_grad = std::move(grad);
    return out;
}

std::vector<ParamBlock> DenseNet::parameter_blocks(const std::string& prefix) {
    std::vector<ParamBlock> out;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        auto& l = layers_[k];
        out.push_back({prefix + "W" + std::to_string(k),
                       {l.weight.data(), static_cast<std::size_t>(l.weight.size())}});
        out.push_back({prefix + "b" + std::to_string(k),
                       {l.bias.data(), static_cast<std::size_t>(l.bias.size())}});
    }
    return out;
}

std::size_t DenseNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

NetGradients DenseNet::zero_gradients() const {
    NetGradients g;
    for (const auto& l : layers_) {
        g.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
        g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
    }
    return g;
}

double mse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("mse: shape mismatch");
    if (a.size() == 0) return 0.0;
    return (a - b).squaredNorm() / static_cast<double>(a.size());
}

Eigen::MatrixXd mse_grad(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("mse_grad: shape mismatch");
    return (2.0 / static_cast<double>(a.size())) * (a - b);
}

void AdamConfig::validate() const {
    if (!(learning_rate > 0)) throw std::invalid_argument("adam: learning rate must be > 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
        throw std::invalid_argument("adam: betas must lie in [0, 1)");
    if (!(epsilon > 0)) throw std::invalid_argument("adam: epsilon must be > 0");
}

Adam::Adam(AdamConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void Adam::step(std::span<const ParamBlock> params, std::span<const std::span<const double>> grads) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adam: parameter/gradient block count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].values.size() != grads[k].size())
            throw std::invalid_argument("adam: block '" + params[k].name + "' size mismatch");
        for (double g : grads[k])
            if (!std::isfinite(g))
                throw std::domain_error("adam: non-finite gradient in block '" + params[k].name + "'");
    }
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.values.size())));
            v_.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.values.size())));
        }
    } else if (m_.size() != params.size()) {
        throw std::invalid_argument("adam: block layout changed between steps");
    }

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& m = m_[k];
        auto& v = v_[k];
        if (static_cast<std::size_t>(m.size()) != params[k].values.size())
            throw std::invalid_argument("adam: block '" + params[k].name + "' changed size");
        double* p = params[k].values.data();
        const double* g = grads[k].data();
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p[i] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
        }
    }
}

Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd&)>& loss,
                                 const Eigen::VectorXd& params, double step) {
    Eigen::VectorXd grad(params.size());
    Eigen::VectorXd p = params;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double orig = p[i];
        p[i] = orig + step;
        const double up = loss(p);
        p[i] = orig - step;
        const double down = loss(p);
        p[i] = orig;
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

std::vector<Eigen::VectorXd> finite_diff_grad(const std::function<double()>& loss,
                                              std::span<const ParamBlock> params, double step) {
    std::vector<Eigen::VectorXd> out;
    for (const auto& block : params) {
        Eigen::VectorXd g(static_cast<Eigen::Index>(block.values.size()));
        for (std::size_t i = 0; i < block.values.size(); ++i) {
            double& x = block.values[i];
            const double orig = x;
            x = orig + step;
            const double up = loss();
            x = orig - step;
            const double down = loss();
            x = orig;
            g[static_cast<Eigen::Index>(i)] = (up - down) / (2.0 * step);
        }
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace koopsplit
