#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "koopsplit/channel.hpp"
#include "koopsplit/dynamics.hpp"
#include "koopsplit/koopman_model.hpp"
#include "koopsplit/neural.hpp"

namespace koopsplit {

struct TrainConfig {
    int epochs = 20;
    int batch_size = 128;
    int prediction_depth = 30;  // T_d
    LossWeights weights;
    int patience = 3;           // epochs without validation improvement before stopping
    double val_fraction = 0.1;  // trailing share of windows held out for validation
    double learning_rate = 1e-3;

    void validate() const;

    bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
    int epoch = 0;               // 1-based
    LossBreakdown train;         // window-weighted mean over the epoch's batches
    LossBreakdown validation;
    double wall_s = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    bool early_stopped = false;
    int best_epoch = 0;
    std::size_t uplink_transmissions = 0;

    std::size_t size() const { return epochs.size(); }
};

// One JSON object per epoch:
// {"epoch", "loss_total", "loss_reconst", "loss_linear", "loss_pred", "val_loss"}.
void write_history_jsonl(std::ostream& os, const TrainHistory& history);

// Fits the state normalizer on the trajectory and sets the latent scale from the current
// encoder. Training expects a prepared model.
void prepare_model(SplitKoopmanModel& model, const Trajectory& traj);

// Sensor-side half: encoder, normalizers and its own optimizer.
class Sensor {
public:
    Sensor(DenseNet encoder, Normalizer state_norm, Normalizer latent_norm, AdamConfig adam,
           const Trajectory& measurements);

    // Clean payload for the given window starts: normalized states and their latents,
    // stacked offset-major. Keeps the encoder activations for encoder_gradients().
    WindowBatch payload(std::span<const std::size_t> starts, int depth);

    // Encoder gradients for d loss / d transmitted latents (layout of payload().latents).
    NetGradients encoder_gradients(const Eigen::MatrixXd& latent_grad) const;
    void apply(const NetGradients& grads);

    // Latent scale <- RMS of the raw encoder output over all measurements.
    void refresh_latent_scale();

    const DenseNet& encoder() const { return encoder_; }
    const Normalizer& state_norm() const { return state_norm_; }
    const Normalizer& latent_norm() const { return latent_norm_; }
    const Eigen::MatrixXd& normalized_measurements() const { return states_; }

private:
    DenseNet encoder_;
    Normalizer state_norm_;
    Normalizer latent_norm_;
    Adam adam_;
    Eigen::MatrixXd states_;  // normalized measurements, one per row
    ForwardCache cache_;
};

// Observer-side half: Koopman matrix, decoder and their optimizer.
class Observer {
public:
    Observer(Eigen::MatrixXd koopman, DenseNet decoder, Normalizer state_norm, AdamConfig adam);

    LossBreakdown evaluate(const WindowBatch& received, const LossWeights& weights,
                           ObserverGradients& grads) const;
    LossBreakdown loss(const WindowBatch& received, const LossWeights& weights) const;
    void apply(const ObserverGradients& grads);

    const Eigen::MatrixXd& koopman() const { return half_.koopman; }
    const DenseNet& decoder() const { return half_.decoder; }

private:
    SplitKoopmanModel half_;  // encoder left empty
    Adam adam_;
};

// Wires a Sensor and an Observer through the uplink (and optional feedback) channel.
class SplitTrainer {
public:
    SplitTrainer(const SplitKoopmanModel& prepared, const Trajectory& measurements,
                 const ChannelConfig& channel, const TrainConfig& cfg,
                 std::uint64_t uplink_seed, std::uint64_t feedback_seed);

    // One optimization step on the given windows; returns the batch losses.
    LossBreakdown step(std::span<const std::size_t> starts);

    // Loss only, over the given windows, through `link`. Processed in chunks.
    LossBreakdown evaluate(std::span<const std::size_t> starts, Link& link);

    void refresh_latent_scale() { sensor_.refresh_latent_scale(); }
    SplitKoopmanModel model() const;
    std::size_t uplink_transmissions() const { return uplink_.transmissions(); }
    std::size_t feedback_transmissions() const { return feedback_.transmissions(); }

private:
    TrainConfig cfg_;
    Sensor sensor_;
    Observer observer_;
    Link uplink_;
    Link feedback_;
    bool noisy_feedback_;
};

struct TrainResult {
    SplitKoopmanModel model;
    TrainHistory history;
};

// Windows of length T_d + 1 (stride 1); the trailing val_fraction of them (after a gap of
// T_d so no state is shared) is held out. Each epoch shuffles the training windows with
// `rng`, refreshes the latent scale, and runs split steps; best-validation weights are
// restored at the end. Throws DivergenceError on a non-finite loss.
TrainResult train(SplitKoopmanModel model, const Trajectory& measurements,
                  const ChannelConfig& channel, const TrainConfig& cfg, Rng& rng);

}  // namespace koopsplit
