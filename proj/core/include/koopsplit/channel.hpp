#pragma once

#include <cstddef>
#include <cstdint>

#include <Eigen/Dense>

#include "koopsplit/random.hpp"

namespace koopsplit {

// Analog uncoded link: y = sqrt(P) (h * s) + n, equalized at the receiver with known h.
struct ChannelConfig {
    double tx_power = 1.0;          // P, W
    double distance = 1000.0;       // R, m
    double pathloss_exp = 2.0;      // alpha
    double noise_variance = 1e-8;   // N_c, W
    double fading_floor = 0.05;     // lower clamp on the Rayleigh magnitude
    bool feedback_noisy = false;    // gradient feedback through the same channel model
    std::uint64_t seed = 0;

    double pathloss_gain() const;   // R^-alpha
    void validate() const;

    bool operator==(const ChannelConfig&) const = default;
};

struct ChannelRealization {
    Eigen::VectorXd gains;          // one gain per transmitted entry, already includes path loss
    double pathloss_gain = 1.0;
};

struct ReceivedVector {
    Eigen::VectorXd values;         // equalized estimate
    Eigen::VectorXd raw;            // y before equalization
};

// Unit-second-moment Rayleigh magnitude, sqrt(Exp(1)).
double sample_rayleigh(Rng& rng);

ChannelRealization sample_fading(std::size_t dim, const ChannelConfig& cfg, Rng& rng);

// With N_c = 0 the equalized values are the signal itself.
ReceivedVector transmit(const Eigen::VectorXd& signal, const ChannelConfig& cfg,
                        const ChannelRealization& ch, Rng& rng);

// 10 log10(P R^-alpha S / N_c); +inf when N_c = 0.
double effective_snr_db(const ChannelConfig& cfg, double signal_power);

// Stateful endpoint pair: owns the random stream and counts vector transmissions.
// Each vector gets a fresh fading block (gains) followed by its noise draws, in that order,
// which matches calling sample_fading() then transmit() per vector.
class Link {
public:
    explicit Link(ChannelConfig cfg);
    Link(ChannelConfig cfg, std::uint64_t stream_seed);

    ReceivedVector send(const Eigen::VectorXd& signal);

    // Sends every row of `rows` as an independent vector and overwrites it with the
    // equalized estimate.
    void send_rows(Eigen::Ref<Eigen::MatrixXd> rows);

    std::size_t transmissions() const { return transmissions_; }
    const ChannelConfig& config() const { return cfg_; }

private:
    ChannelConfig cfg_;
    Rng rng_;
    std::size_t transmissions_ = 0;
};

}  // namespace koopsplit
