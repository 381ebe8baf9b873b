#include "koopsplit/koopman_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

namespace koopsplit {

Normalizer Normalizer::identity(Eigen::Index dim) {
    return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

Normalizer Normalizer::fit(const std::vector<StateVector>& samples) {
    if (samples.empty()) throw std::invalid_argument("Normalizer::fit: no samples");
    const Eigen::Index d = samples.front().size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (const auto& s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
    for (const auto& s : samples) var += (s - mean).cwiseAbs2();
    var /= static_cast<double>(samples.size());
    Eigen::VectorXd scale = var.cwiseSqrt();
    for (auto& v : scale)
        if (!(v > 1e-12)) v = 1.0;
    return {mean, scale};
}

Eigen::MatrixXd Normalizer::normalize(const Eigen::MatrixXd& rows) const {
    if (rows.cols() != dim()) throw std::invalid_argument("Normalizer: dimension mismatch");
    return (rows.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Eigen::MatrixXd Normalizer::denormalize(const Eigen::MatrixXd& rows) const {
    if (rows.cols() != dim()) throw std::invalid_argument("Normalizer: dimension mismatch");
    Eigen::MatrixXd out = rows.array().rowwise() * scale.transpose().array();
    out.rowwise() += mean.transpose();
    return out;
}

void ModelShape::validate() const {
    if (state_dim < 1) throw std::invalid_argument("state_dim must be >= 1");
    if (latent_dim < 1) throw std::invalid_argument("latent_dim must be >= 1");
    for (int w : hidden_widths)
        if (w < 1) throw std::invalid_argument("hidden widths must be >= 1");
}

SplitKoopmanModel SplitKoopmanModel::create(const ModelShape& shape, Rng& rng) {
    shape.validate();
    std::vector<int> enc_widths = shape.hidden_widths;
    enc_widths.push_back(shape.latent_dim);
    std::vector<int> dec_widths(shape.hidden_widths.rbegin(), shape.hidden_widths.rend());
    dec_widths.push_back(shape.state_dim);

    SplitKoopmanModel m;
    m.encoder = DenseNet::build(shape.state_dim, enc_widths, Activation::relu, Activation::linear, rng);
    m.koopman = Eigen::MatrixXd::Identity(shape.latent_dim, shape.latent_dim);
    m.decoder = DenseNet::build(shape.latent_dim, dec_widths, Activation::relu, Activation::linear, rng);
    m.state_norm = Normalizer::identity(shape.state_dim);
    m.latent_norm = Normalizer::identity(shape.latent_dim);
    return m;
}

ModelShape SplitKoopmanModel::shape() const {
    ModelShape s;
    s.state_dim = state_dim();
    s.latent_dim = latent_dim();
    s.hidden_widths.clear();
    const auto& layers = encoder.layers();
    for (std::size_t k = 0; k + 1 < layers.size(); ++k)
        s.hidden_widths.push_back(static_cast<int>(layers[k].out_dim()));
    return s;
}

void SplitKoopmanModel::validate() const {
    const auto q = koopman.rows();
    if (koopman.cols() != q) throw std::invalid_argument("Koopman matrix must be square");
    if (encoder.output_dim() != q) throw std::invalid_argument("encoder output dim != q");
    if (decoder.input_dim() != q) throw std::invalid_argument("decoder input dim != q");
    if (decoder.output_dim() != encoder.input_dim())
        throw std::invalid_argument("decoder output dim != state dim");
    if (state_norm.dim() != encoder.input_dim() || latent_norm.dim() != q)
        throw std::invalid_argument("normalizer dimension mismatch");
    if (!koopman.allFinite()) throw std::invalid_argument("Koopman matrix is not finite");
    if ((state_norm.scale.array() <= 0).any() || (latent_norm.scale.array() <= 0).any())
        throw std::invalid_argument("normalizer scales must be > 0");
}

bool SplitKoopmanModel::operator==(const SplitKoopmanModel& other) const {
    return encoder == other.encoder && decoder == other.decoder &&
           koopman.rows() == other.koopman.rows() && koopman.cols() == other.koopman.cols() &&
           koopman == other.koopman && state_norm == other.state_norm &&
           latent_norm == other.latent_norm;
}

Eigen::MatrixXd encoder_raw(const SplitKoopmanModel& model, const Eigen::MatrixXd& normalized_states) {
    return model.encoder.forward(normalized_states);
}

Eigen::MatrixXd encode(const SplitKoopmanModel& model, const Eigen::MatrixXd& states) {
    if (states.cols() != model.encoder.input_dim())
        throw std::invalid_argument("encode: expected state dimension " +
                                    std::to_string(model.state_dim()) + ", got " +
                                    std::to_string(states.cols()));
    const Eigen::MatrixXd raw = model.encoder.forward(model.state_norm.normalize(states));
    return model.latent_norm.normalize(raw);
}

Eigen::VectorXd encode(const SplitKoopmanModel& model, const StateVector& state) {
    Eigen::MatrixXd row = state.transpose();
    return encode(model, row).row(0).transpose();
}

Eigen::MatrixXd decode(const SplitKoopmanModel& model, const Eigen::MatrixXd& latents) {
    if (latents.cols() != model.latent_dim())
        throw std::invalid_argument("decode: expected latent dimension " +
                                    std::to_string(model.latent_dim()) + ", got " +
                                    std::to_string(latents.cols()));
    return model.state_norm.denormalize(model.decoder.forward(latents));
}

StateVector decode(const SplitKoopmanModel& model, const Eigen::VectorXd& latent) {
    Eigen::MatrixXd row = latent.transpose();
    return decode(model, row).row(0).transpose();
}

Eigen::VectorXd koopman_advance(const SplitKoopmanModel& model, const Eigen::VectorXd& z, int steps) {
    if (steps < 0) throw std::invalid_argument("koopman_advance: steps must be >= 0");
    if (z.size() != model.latent_dim()) throw std::invalid_argument("koopman_advance: latent size");
    Eigen::VectorXd out = z;
    for (int i = 0; i < steps; ++i) out = model.koopman * out;
    return out;
}

std::vector<std::complex<double>> koopman_spectrum(const SplitKoopmanModel& model) {
    if (!model.koopman.allFinite()) throw std::domain_error("koopman_spectrum: K is not finite");
    Eigen::EigenSolver<Eigen::MatrixXd> solver(model.koopman, false);
    if (solver.info() != Eigen::Success) throw std::runtime_error("koopman_spectrum: eigensolver failed");
    const auto& ev = solver.eigenvalues();
    return {ev.data(), ev.data() + ev.size()};
}

double spectral_radius(const SplitKoopmanModel& model) {
    double r = 0.0;
    for (const auto& l : koopman_spectrum(model)) r = std::max(r, std::abs(l));
    return r;
}

namespace {

Eigen::MatrixXd stack_rows(const std::vector<StateVector>& states) {
    if (states.empty()) return {};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(states.size()), states.front().size());
    for (std::size_t i = 0; i < states.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = states[i].transpose();
    return m;
}

}  // namespace

void refresh_latent_scale(SplitKoopmanModel& model, const std::vector<StateVector>& states) {
    if (states.empty()) throw std::invalid_argument("refresh_latent_scale: no states");
    const Eigen::MatrixXd raw = model.encoder.forward(model.state_norm.normalize(stack_rows(states)));
    Eigen::VectorXd rms = (raw.colwise().squaredNorm() / static_cast<double>(raw.rows())).cwiseSqrt().transpose();
    for (auto& v : rms)
        if (!(v > 1e-12)) v = 1.0;
    model.latent_norm.mean = Eigen::VectorXd::Zero(rms.size());
    model.latent_norm.scale = rms;
}

double latent_linearity_error(const SplitKoopmanModel& model, const Trajectory& traj) {
    if (traj.size() < 2) throw std::invalid_argument("latent_linearity_error: need >= 2 states");
    const Eigen::MatrixXd z = encode(model, stack_rows(traj.states));
    std::vector<double> rel;
    rel.reserve(traj.size() - 1);
    for (Eigen::Index t = 0; t + 1 < z.rows(); ++t) {
        const Eigen::VectorXd next = z.row(t + 1).transpose();
        const double denom = next.norm();
        if (denom == 0.0) continue;
        const Eigen::VectorXd pred = model.koopman * z.row(t).transpose();
        rel.push_back((next - pred).norm() / denom);
    }
    if (rel.empty()) throw std::domain_error("latent_linearity_error: all latents are zero");
    auto mid = rel.begin() + static_cast<std::ptrdiff_t>(rel.size() / 2);
    std::nth_element(rel.begin(), mid, rel.end());
    if (rel.size() % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(rel.begin(), mid);
    return 0.5 * (lower + upper);
}

void WindowBatch::validate() const {
    if (windows < 1) throw std::invalid_argument("WindowBatch: no windows");
    if (depth < 0) throw std::invalid_argument("WindowBatch: negative depth");
    const Eigen::Index rows = (depth + 1) * windows;
    if (states.rows() != rows || latents.rows() != rows)
        throw std::invalid_argument("WindowBatch: expected " + std::to_string(rows) +
                                    " stacked rows (window length mismatch)");
}

namespace {

LossBreakdown evaluate_losses(const SplitKoopmanModel& model, const WindowBatch& batch,
                              const LossWeights& w, ObserverGradients* grads) {
    batch.validate();
    const Eigen::Index q = model.latent_dim();
    const Eigen::Index d = model.state_dim();
    if (batch.latents.cols() != q || batch.states.cols() != d)
        throw std::invalid_argument("compute_losses: batch dimensions do not match the model");

    const Eigen::Index nb = batch.windows;
    const int depth = batch.depth;
    const Eigen::MatrixXd kt = model.koopman.transpose();

    // Y_0 = z_t, Y_tau = Y_{tau-1} K^T  (row form of K^tau z_t)
    Eigen::MatrixXd y(batch.latents.rows(), q);
    y.topRows(nb) = batch.latent_block(0);
    for (int tau = 1; tau <= depth; ++tau)
        y.middleRows(tau * nb, nb).noalias() = y.middleRows((tau - 1) * nb, nb) * kt;

    ForwardCache cache;
    const Eigen::MatrixXd recon = model.decoder.forward(y, grads ? &cache : nullptr);

    const double state_count = static_cast<double>(nb * d);
    const double latent_count = static_cast<double>(nb * q);

    LossBreakdown out;
    out.reconstruction = (recon.topRows(nb) - batch.state_block(0)).squaredNorm() / state_count;
    double lin_sum = 0.0;
    double pred_sum = 0.0;
    for (int tau = 1; tau <= depth; ++tau) {
        lin_sum += (y.middleRows(tau * nb, nb) - batch.latent_block(tau)).squaredNorm() / latent_count;
        pred_sum += (recon.middleRows(tau * nb, nb) - batch.state_block(tau)).squaredNorm() / state_count;
    }
    if (depth > 0) {
        out.linearity = lin_sum / depth;
        out.prediction = pred_sum / depth;
    }
    out.overall = w.reconstruction * out.reconstruction + w.linearity * out.linearity +
                  w.prediction * out.prediction;
    if (!grads) return out;

    // decoder output gradient
    Eigen::MatrixXd d_recon(recon.rows(), d);
    d_recon.topRows(nb) = (2.0 * w.reconstruction / state_count) * (recon.topRows(nb) - batch.state_block(0));
    const double pred_coeff = depth > 0 ? 2.0 * w.prediction / (state_count * depth) : 0.0;
    for (int tau = 1; tau <= depth; ++tau)
        d_recon.middleRows(tau * nb, nb) =
            pred_coeff * (recon.middleRows(tau * nb, nb) - batch.state_block(tau));

    BackwardResult dec = model.decoder.backward(cache, d_recon);
    Eigen::MatrixXd& dy = dec.input_grad;

    grads->latents.setZero(batch.latents.rows(), q);
    const double lin_coeff = depth > 0 ? 2.0 * w.linearity / (latent_count * depth) : 0.0;
    for (int tau = 1; tau <= depth; ++tau) {
        const Eigen::MatrixXd diff = lin_coeff * (y.middleRows(tau * nb, nb) - batch.latent_block(tau));
        dy.middleRows(tau * nb, nb) += diff;
        grads->latents.middleRows(tau * nb, nb) = -diff;
    }

    // reverse through Y_tau = Y_{tau-1} K^T
    grads->koopman.setZero(q, q);
    Eigen::MatrixXd adj = dy.middleRows(depth * nb, nb);
    for (int tau = depth; tau >= 1; --tau) {
        grads->koopman.noalias() += adj.transpose() * y.middleRows((tau - 1) * nb, nb);
        Eigen::MatrixXd prev = dy.middleRows((tau - 1) * nb, nb);
        prev.noalias() += adj * model.koopman;
        adj = std::move(prev);
    }
    grads->latents.topRows(nb) = adj;
    grads->decoder = std::move(dec.params);
    return out;
}

}  // namespace

LossBreakdown compute_losses(const SplitKoopmanModel& model, const WindowBatch& batch,
                             const LossWeights& weights) {
    return evaluate_losses(model, batch, weights, nullptr);
}

LossBreakdown compute_losses_with_gradients(const SplitKoopmanModel& model, const WindowBatch& batch,
                                            const LossWeights& weights, ObserverGradients& grads) {
    return evaluate_losses(model, batch, weights, &grads);
}

}  // namespace koopsplit
