#include "koopsplit/split_training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "koopsplit/errors.hpp"

namespace koopsplit {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
    if (prediction_depth < 1) throw ConfigError("prediction_depth", "must be >= 1");
    if (!(weights.reconstruction >= 0) || !(weights.linearity >= 0) || !(weights.prediction >= 0))
        throw ConfigError("loss_weights", "must be >= 0");
    if (patience < 1) throw ConfigError("patience", "must be >= 1");
    if (!(val_fraction > 0 && val_fraction < 0.5)) throw ConfigError("val_fraction", "must lie in (0, 0.5)");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate", "must be > 0");
}

void write_history_jsonl(std::ostream& os, const TrainHistory& history) {
    for (const auto& e : history.epochs) {
        nlohmann::json j;
        j["epoch"] = e.epoch;
        j["loss_total"] = e.train.overall;
        j["loss_reconst"] = e.train.reconstruction;
        j["loss_linear"] = e.train.linearity;
        j["loss_pred"] = e.train.prediction;
        j["val_loss"] = e.validation.overall;
        os << j.dump() << '\n';
    }
}

void prepare_model(SplitKoopmanModel& model, const Trajectory& traj) {
    traj.validate();
    if (traj.dim() != model.state_dim()) throw std::invalid_argument("prepare_model: state dimension mismatch");
    model.state_norm = Normalizer::fit(traj.states);
    refresh_latent_scale(model, traj.states);
}

// ---------------------------------------------------------------------------- Sensor

Sensor::Sensor(DenseNet encoder, Normalizer state_norm, Normalizer latent_norm, AdamConfig adam,
               const Trajectory& measurements)
    : encoder_(std::move(encoder)),
      state_norm_(std::move(state_norm)),
      latent_norm_(std::move(latent_norm)),
      adam_(adam) {
    measurements.validate();
    Eigen::MatrixXd raw(static_cast<Eigen::Index>(measurements.size()), measurements.dim());
    for (std::size_t i = 0; i < measurements.size(); ++i)
        raw.row(static_cast<Eigen::Index>(i)) = measurements.states[i].transpose();
    states_ = state_norm_.normalize(raw);
}

WindowBatch Sensor::payload(std::span<const std::size_t> starts, int depth) {
    const auto nb = static_cast<Eigen::Index>(starts.size());
    WindowBatch out;
    out.windows = nb;
    out.depth = depth;
    out.states.resize((depth + 1) * nb, states_.cols());
    for (int tau = 0; tau <= depth; ++tau)
        for (Eigen::Index w = 0; w < nb; ++w) {
            const auto src = static_cast<Eigen::Index>(starts[static_cast<std::size_t>(w)]) + tau;
            if (src >= states_.rows()) throw std::out_of_range("Sensor::payload: window past end of data");
            out.states.row(tau * nb + w) = states_.row(src);
        }
    const Eigen::MatrixXd raw = encoder_.forward(out.states, &cache_);
    out.latents = latent_norm_.normalize(raw);
    return out;
}

NetGradients Sensor::encoder_gradients(const Eigen::MatrixXd& latent_grad) const {
    // z = u / scale  =>  dL/du = dL/dz / scale
    const Eigen::MatrixXd du = latent_grad.array().rowwise() / latent_norm_.scale.transpose().array();
    return encoder_.backward(cache_, du).params;
}

void Sensor::apply(const NetGradients& grads) {
    const auto blocks = encoder_.parameter_blocks("encoder.");
    const auto g = grads.blocks();
    adam_.step(blocks, g);
}

void Sensor::refresh_latent_scale() {
    const Eigen::MatrixXd raw = encoder_.forward(states_);
    Eigen::VectorXd rms = (raw.colwise().squaredNorm() / static_cast<double>(raw.rows())).cwiseSqrt().transpose();
    for (auto& v : rms)
        if (!(v > 1e-12)) v = 1.0;
    latent_norm_.mean = Eigen::VectorXd::Zero(rms.size());
    latent_norm_.scale = rms;
}

// ---------------------------------------------------------------------------- Observer

Observer::Observer(Eigen::MatrixXd koopman, DenseNet decoder, Normalizer state_norm, AdamConfig adam)
    : adam_(adam) {
    half_.koopman = std::move(koopman);
    half_.decoder = std::move(decoder);
    half_.state_norm = std::move(state_norm);
    half_.latent_norm = Normalizer::identity(half_.koopman.rows());
}

LossBreakdown Observer::evaluate(const WindowBatch& received, const LossWeights& weights,
                                 ObserverGradients& grads) const {
    return compute_losses_with_gradients(half_, received, weights, grads);
}

LossBreakdown Observer::loss(const WindowBatch& received, const LossWeights& weights) const {
    return compute_losses(half_, received, weights);
}

void Observer::apply(const ObserverGradients& grads) {
    std::vector<ParamBlock> blocks;
    blocks.push_back({"koopman", {half_.koopman.data(), static_cast<std::size_t>(half_.koopman.size())}});
    auto dec = half_.decoder.parameter_blocks("decoder.");
    blocks.insert(blocks.end(), dec.begin(), dec.end());

    std::vector<std::span<const double>> g;
    g.emplace_back(grads.koopman.data(), static_cast<std::size_t>(grads.koopman.size()));
    auto dg = grads.decoder.blocks();
    g.insert(g.end(), dg.begin(), dg.end());
    adam_.step(blocks, g);
}

// ---------------------------------------------------------------------------- SplitTrainer

SplitTrainer::SplitTrainer(const SplitKoopmanModel& prepared, const Trajectory& measurements,
                           const ChannelConfig& channel, const TrainConfig& cfg,
                           std::uint64_t uplink_seed, std::uint64_t feedback_seed)
    : cfg_(cfg),
      sensor_(prepared.encoder, prepared.state_norm, prepared.latent_norm,
              AdamConfig{cfg.learning_rate}, measurements),
      observer_(prepared.koopman, prepared.decoder, prepared.state_norm, AdamConfig{cfg.learning_rate}),
      uplink_(channel, uplink_seed),
      feedback_(channel, feedback_seed),
      noisy_feedback_(channel.feedback_noisy) {
    cfg_.validate();
    prepared.validate();
}

LossBreakdown SplitTrainer::step(std::span<const std::size_t> starts) {
    // sensor: encode with the current weights, send states and latents
    WindowBatch batch = sensor_.payload(starts, cfg_.prediction_depth);
    uplink_.send_rows(batch.states);
    uplink_.send_rows(batch.latents);

    // observer: losses, local update, gradient w.r.t. the received latents
    ObserverGradients grads;
    const LossBreakdown loss = observer_.evaluate(batch, cfg_.weights, grads);
    if (!std::isfinite(loss.overall)) return loss;
    observer_.apply(grads);

    Eigen::MatrixXd feedback = std::move(grads.latents);
    if (noisy_feedback_) {
        // analog feedback at unit average power; the scalar RMS travels as ideal side information
        const double rms = std::sqrt(feedback.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, feedback.size())));
        if (rms > 0) {
            feedback /= rms;
            feedback_.send_rows(feedback);
            feedback *= rms;
        }
    }

    // sensor: finish backpropagation through the encoder
    sensor_.apply(sensor_.encoder_gradients(feedback));
    return loss;
}

LossBreakdown SplitTrainer::evaluate(std::span<const std::size_t> starts, Link& link) {
    constexpr std::size_t kChunk = 512;
    LossBreakdown total;
    std::size_t seen = 0;
    for (std::size_t begin = 0; begin < starts.size(); begin += kChunk) {
        const auto chunk = starts.subspan(begin, std::min(kChunk, starts.size() - begin));
        WindowBatch batch = sensor_.payload(chunk, cfg_.prediction_depth);
        link.send_rows(batch.states);
        link.send_rows(batch.latents);
        const LossBreakdown l = observer_.loss(batch, cfg_.weights);
        const auto n = static_cast<double>(chunk.size());
        total.reconstruction += n * l.reconstruction;
        total.linearity += n * l.linearity;
        total.prediction += n * l.prediction;
        total.overall += n * l.overall;
        seen += chunk.size();
    }
    if (seen > 0) {
        const auto n = static_cast<double>(seen);
        total.reconstruction /= n;
        total.linearity /= n;
        total.prediction /= n;
        total.overall /= n;
    }
    return total;
}

SplitKoopmanModel SplitTrainer::model() const {
    SplitKoopmanModel m;
    m.encoder = sensor_.encoder();
    m.koopman = observer_.koopman();
    m.decoder = observer_.decoder();
    m.state_norm = sensor_.state_norm();
    m.latent_norm = sensor_.latent_norm();
    return m;
}

// ---------------------------------------------------------------------------- train

TrainResult train(SplitKoopmanModel model, const Trajectory& measurements,
                  const ChannelConfig& channel, const TrainConfig& cfg, Rng& rng) {
    cfg.validate();
    channel.validate();
    measurements.validate();
    model.validate();

    const std::size_t depth = static_cast<std::size_t>(cfg.prediction_depth);
    const std::size_t n = measurements.size();
    if (n <= depth + static_cast<std::size_t>(cfg.batch_size))
        throw std::invalid_argument("train: trajectory of " + std::to_string(n) +
                                    " samples is too short for T_d + batch_size");

    const std::size_t windows = n - depth;
    const auto n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * static_cast<double>(windows)));
    const std::size_t gap = n_val > 0 ? depth : 0;
    if (windows <= n_val + gap) throw std::invalid_argument("train: no training windows left");
    const std::size_t n_train = windows - n_val - gap;

    std::vector<std::size_t> train_idx(n_train);
    std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
    std::vector<std::size_t> val_idx(n_val);
    std::iota(val_idx.begin(), val_idx.end(), n_train + gap);

    const std::uint64_t uplink_seed = rng();
    const std::uint64_t feedback_seed = rng();
    const std::uint64_t val_seed = rng();

    SplitTrainer trainer(model, measurements, channel, cfg, uplink_seed, feedback_seed);

    TrainResult result;
    result.model = model;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t_start = std::chrono::steady_clock::now();
        trainer.refresh_latent_scale();
        std::shuffle(train_idx.begin(), train_idx.end(), rng);

        EpochRecord rec;
        rec.epoch = epoch;
        int batch_no = 0;
        for (std::size_t begin = 0; begin < n_train; begin += static_cast<std::size_t>(cfg.batch_size), ++batch_no) {
            const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n_train - begin);
            const std::span<const std::size_t> starts(train_idx.data() + begin, len);
            const LossBreakdown l = trainer.step(starts);
            if (!std::isfinite(l.overall)) throw DivergenceError(epoch, batch_no);
            const auto w = static_cast<double>(len);
            rec.train.reconstruction += w * l.reconstruction;
            rec.train.linearity += w * l.linearity;
            rec.train.prediction += w * l.prediction;
            rec.train.overall += w * l.overall;
        }
        const auto nt = static_cast<double>(n_train);
        rec.train.reconstruction /= nt;
        rec.train.linearity /= nt;
        rec.train.prediction /= nt;
        rec.train.overall /= nt;

        if (n_val > 0) {
            // same noise realization every epoch so epochs are compared on equal footing
            Link val_link(channel, val_seed);
            rec.validation = trainer.evaluate(val_idx, val_link);
        } else {
            rec.validation = rec.train;
        }
        if (!std::isfinite(rec.validation.overall)) throw DivergenceError(epoch, batch_no);
        rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        result.history.epochs.push_back(rec);

        if (rec.validation.overall < best_val) {
            best_val = rec.validation.overall;
            result.model = trainer.model();
            result.history.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience && epoch < cfg.epochs) {
            result.history.early_stopped = true;
            break;
        }
    }
    result.history.uplink_transmissions = trainer.uplink_transmissions();
    return result;
}

}  // namespace koopsplit
