#include "koopsplit/channel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "koopsplit/errors.hpp"

namespace koopsplit {

double ChannelConfig::pathloss_gain() const { return std::pow(distance, -pathloss_exp); }

void ChannelConfig::validate() const {
    if (!(tx_power > 0) || !std::isfinite(tx_power)) throw ConfigError("tx_power_watts", "must be > 0");
    if (!(distance > 0) || !std::isfinite(distance)) throw ConfigError("distance_m", "must be > 0");
    if (!(pathloss_exp >= 0) || !std::isfinite(pathloss_exp))
        throw ConfigError("pathloss_exp", "must be >= 0");
    if (!(noise_variance >= 0) || !std::isfinite(noise_variance))
        throw ConfigError("noise_variance_w", "must be >= 0");
    if (!(fading_floor > 0 && fading_floor < 1))
        throw ConfigError("fading_floor", "must lie in (0, 1)");
}

double sample_rayleigh(Rng& rng) {
    std::exponential_distribution<double> expo(1.0);
    return std::sqrt(expo(rng));
}

ChannelRealization sample_fading(std::size_t dim, const ChannelConfig& cfg, Rng& rng) {
    if (dim < 1) throw std::invalid_argument("sample_fading: dim must be >= 1");
    cfg.validate();
    ChannelRealization ch;
    ch.pathloss_gain = cfg.pathloss_gain();
    const double large_scale = std::sqrt(ch.pathloss_gain);
    ch.gains.resize(static_cast<Eigen::Index>(dim));
    for (auto& g : ch.gains) g = std::max(cfg.fading_floor, sample_rayleigh(rng)) * large_scale;
    return ch;
}

ReceivedVector transmit(const Eigen::VectorXd& signal, const ChannelConfig& cfg,
                        const ChannelRealization& ch, Rng& rng) {
    if (signal.size() != ch.gains.size())
        throw std::invalid_argument("transmit: signal has " + std::to_string(signal.size()) +
                                    " entries but channel has " + std::to_string(ch.gains.size()));
    const double amp = std::sqrt(cfg.tx_power);
    std::normal_distribution<double> gauss(0.0, std::sqrt(cfg.noise_variance));

    ReceivedVector out;
    out.raw.resize(signal.size());
    out.values.resize(signal.size());
    for (Eigen::Index i = 0; i < signal.size(); ++i) {
        const double n = cfg.noise_variance > 0 ? gauss(rng) : 0.0;
        out.raw[i] = amp * (ch.gains[i] * signal[i]) + n;
        // without noise the equalizer recovers the signal exactly, not up to rounding
        out.values[i] = cfg.noise_variance > 0 ? out.raw[i] / (amp * ch.gains[i]) : signal[i];
    }
    return out;
}

double effective_snr_db(const ChannelConfig& cfg, double signal_power) {
    if (!(signal_power > 0)) throw std::invalid_argument("effective_snr_db: signal_power must be > 0");
    if (cfg.noise_variance == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(cfg.tx_power * cfg.pathloss_gain() * signal_power / cfg.noise_variance);
}

Link::Link(ChannelConfig cfg) : Link(cfg, cfg.seed) {}

Link::Link(ChannelConfig cfg, std::uint64_t stream_seed) : cfg_(cfg), rng_(stream_seed) {
    cfg_.validate();
}

ReceivedVector Link::send(const Eigen::VectorXd& signal) {
    const auto ch = sample_fading(static_cast<std::size_t>(signal.size()), cfg_, rng_);
    ++transmissions_;
    return transmit(signal, cfg_, ch, rng_);
}

void Link::send_rows(Eigen::Ref<Eigen::MatrixXd> rows) {
    const double amp = std::sqrt(cfg_.tx_power);
    const double large_scale = std::sqrt(cfg_.pathloss_gain());
    const bool noisy = cfg_.noise_variance > 0;
    const double sigma = std::sqrt(cfg_.noise_variance);
    const Eigen::Index dim = rows.cols();
    Eigen::VectorXd gains(dim);

    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        for (Eigen::Index i = 0; i < dim; ++i)
            gains[i] = std::max(cfg_.fading_floor, sample_rayleigh(rng_)) * large_scale;
        // fresh distribution per vector: its cached spare draw must not leak across vectors
        if (!noisy) continue;
        std::normal_distribution<double> gauss(0.0, sigma);
        for (Eigen::Index i = 0; i < dim; ++i) {
            const double raw = amp * (gains[i] * rows(r, i)) + gauss(rng_);
            rows(r, i) = raw / (amp * gains[i]);
        }
    }
    transmissions_ += static_cast<std::size_t>(rows.rows());
}

}  // namespace koopsplit
