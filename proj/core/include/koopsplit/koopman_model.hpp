#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "koopsplit/dynamics.hpp"
#include "koopsplit/neural.hpp"
#include "koopsplit/random.hpp"

namespace koopsplit {

// Per-dimension affine standardization: normalized = (x - mean) / scale.
struct Normalizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static Normalizer identity(Eigen::Index dim);
    // Sample mean and standard deviation; zero spread falls back to scale 1.
    static Normalizer fit(const std::vector<StateVector>& samples);

    Eigen::MatrixXd normalize(const Eigen::MatrixXd& rows) const;
    Eigen::MatrixXd denormalize(const Eigen::MatrixXd& rows) const;
    Eigen::Index dim() const { return mean.size(); }
    bool operator==(const Normalizer& o) const {
        return mean.size() == o.mean.size() && scale.size() == o.scale.size() && mean == o.mean &&
               scale == o.scale;
    }
};

struct ModelShape {
    int state_dim = 4;
    int latent_dim = 2;
    std::vector<int> hidden_widths{128, 64, 32};

    void validate() const;

    bool operator==(const ModelShape&) const = default;
};

// Encoder (sensor side), Koopman matrix and decoder (observer side).
//
// Coordinates: the encoder sees state_norm-normalized states and its raw output is divided
// by latent_norm.scale (latent_norm.mean is always zero) before transmission, so every
// transmitted latent entry has unit average power. K and the decoder act on those
// transmitted latents; the decoder outputs normalized states.
struct SplitKoopmanModel {
    DenseNet encoder;
    Eigen::MatrixXd koopman;
    DenseNet decoder;
    Normalizer state_norm;
    Normalizer latent_norm;

    // Encoder D -> widths... -> q, decoder q -> reversed widths... -> D (ReLU hidden, linear
    // output), K = identity, identity normalizers.
    static SplitKoopmanModel create(const ModelShape& shape, Rng& rng);

    int state_dim() const { return static_cast<int>(decoder.output_dim()); }
    int latent_dim() const { return static_cast<int>(koopman.rows()); }
    ModelShape shape() const;

    void validate() const;
    bool operator==(const SplitKoopmanModel& other) const;
};

// Raw encoder output u for rows of already-normalized states.
Eigen::MatrixXd encoder_raw(const SplitKoopmanModel& model, const Eigen::MatrixXd& normalized_states);

// Transmitted latent z for physical states (rows) / a single state.
Eigen::MatrixXd encode(const SplitKoopmanModel& model, const Eigen::MatrixXd& states);
Eigen::VectorXd encode(const SplitKoopmanModel& model, const StateVector& state);

// Physical state estimate for latents (rows) / a single latent.
Eigen::MatrixXd decode(const SplitKoopmanModel& model, const Eigen::MatrixXd& latents);
StateVector decode(const SplitKoopmanModel& model, const Eigen::VectorXd& latent);

// K^steps z by repeated application.
Eigen::VectorXd koopman_advance(const SplitKoopmanModel& model, const Eigen::VectorXd& z, int steps);

std::vector<std::complex<double>> koopman_spectrum(const SplitKoopmanModel& model);
double spectral_radius(const SplitKoopmanModel& model);

// Re-estimates latent_norm.scale as the per-dimension RMS of the raw encoder output over
// the given physical states.
void refresh_latent_scale(SplitKoopmanModel& model, const std::vector<StateVector>& states);

// Median over t of |z_{t+1} - K z_t| / |z_{t+1}| on noiseless states.
double latent_linearity_error(const SplitKoopmanModel& model, const Trajectory& traj);

struct LossWeights {
    double reconstruction = 1.0;  // b1
    double linearity = 1.0;       // b2
    double prediction = 1.0;      // b3

    bool all_zero() const { return reconstruction == 0 && linearity == 0 && prediction == 0; }

    bool operator==(const LossWeights&) const = default;
};

struct LossBreakdown {
    double reconstruction = 0.0;
    double linearity = 0.0;
    double prediction = 0.0;
    double overall = 0.0;
};

// Channel-equalized windows as received by the observer. Rows are stacked offset-major:
// row tau * windows + w holds offset tau of window w, tau = 0..depth.
struct WindowBatch {
    Eigen::MatrixXd states;   // normalized state estimates, (depth + 1) * windows x D
    Eigen::MatrixXd latents;  // latent estimates, (depth + 1) * windows x q
    Eigen::Index windows = 0;
    int depth = 0;            // T_d

    auto state_block(int tau) const { return states.middleRows(tau * windows, windows); }
    auto latent_block(int tau) const { return latents.middleRows(tau * windows, windows); }
    void validate() const;
};

struct ObserverGradients {
    NetGradients decoder;
    Eigen::MatrixXd koopman;
    Eigen::MatrixXd latents;  // d loss / d latent estimates, same layout as WindowBatch::latents
};

// reconstruction = mse(s_t, dec(z_t));
// linearity      = mean_{tau=1..T_d} mse(z_{t+tau}, K^tau z_t);
// prediction     = mean_{tau=1..T_d} mse(s_{t+tau}, dec(K^tau z_t));
// overall        = b1 reconstruction + b2 linearity + b3 prediction.
LossBreakdown compute_losses(const SplitKoopmanModel& model, const WindowBatch& batch,
                             const LossWeights& weights);

// Same losses plus exact gradients with respect to K, the decoder and the received latents.
LossBreakdown compute_losses_with_gradients(const SplitKoopmanModel& model, const WindowBatch& batch,
                                            const LossWeights& weights, ObserverGradients& grads);

}  // namespace koopsplit
