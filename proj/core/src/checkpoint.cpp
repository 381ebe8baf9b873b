#include "koopsplit/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace koopsplit {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

template <typename T>
void put(std::ostream& os, T value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T value{};
    if (!is.read(reinterpret_cast<char*>(&value), sizeof(T)))
        throw std::runtime_error("checkpoint: unexpected end of data");
    return value;
}

void put_row_major(std::ostream& os, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(os, m(r, c));
}

Eigen::MatrixXd get_row_major(std::istream& is, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get<double>(is);
    return m;
}

void put_vector(std::ostream& os, const Eigen::VectorXd& v) {
    for (double x : v) put<double>(os, x);
}

Eigen::VectorXd get_vector(std::istream& is, Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (auto& x : v) x = get<double>(is);
    return v;
}

void put_net(std::ostream& os, const DenseNet& net) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(net.layers().size()));
    for (const auto& l : net.layers()) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(l.in_dim()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(l.out_dim()));
        put<std::uint8_t>(os, static_cast<std::uint8_t>(l.activation));
        put_row_major(os, l.weight);
        put_vector(os, l.bias);
    }
}

DenseNet get_net(std::istream& is) {
    const auto count = get<std::uint32_t>(is);
    if (count == 0 || count > 1024) throw std::runtime_error("checkpoint: implausible layer count");
    std::vector<DenseLayer> layers;
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto in = get<std::uint32_t>(is);
        const auto out = get<std::uint32_t>(is);
        const auto act = get<std::uint8_t>(is);
        if (in == 0 || out == 0 || in > (1u << 20) || out > (1u << 20))
            throw std::runtime_error("checkpoint: implausible layer shape");
        if (act > 1) throw std::runtime_error("checkpoint: unknown activation code");
        DenseLayer l;
        l.activation = static_cast<Activation>(act);
        l.weight = get_row_major(is, out, in);
        l.bias = get_vector(is, out);
        layers.push_back(std::move(l));
    }
    return DenseNet(std::move(layers));
}

}  // namespace

void save_checkpoint(std::ostream& os, const SplitKoopmanModel& model) {
    model.validate();
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(model.state_dim()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(model.latent_dim()));
    put_net(os, model.encoder);
    put_row_major(os, model.koopman);
    put_net(os, model.decoder);
    put_vector(os, model.state_norm.mean);
    put_vector(os, model.state_norm.scale);
    put_vector(os, model.latent_norm.mean);
    put_vector(os, model.latent_norm.scale);
    if (!os) throw std::runtime_error("checkpoint: write failed");
}

SplitKoopmanModel load_checkpoint(std::istream& is) {
    char magic[sizeof(kCheckpointMagic)];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw std::runtime_error("checkpoint: bad magic header");
    const auto version = get<std::uint32_t>(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    const auto d = static_cast<Eigen::Index>(get<std::uint32_t>(is));
    const auto q = static_cast<Eigen::Index>(get<std::uint32_t>(is));
    if (d == 0 || q == 0 || d > 4096 || q > 4096) throw std::runtime_error("checkpoint: implausible dimensions");

    SplitKoopmanModel m;
    m.encoder = get_net(is);
    m.koopman = get_row_major(is, q, q);
    m.decoder = get_net(is);
    m.state_norm.mean = get_vector(is, d);
    m.state_norm.scale = get_vector(is, d);
    m.latent_norm.mean = get_vector(is, q);
    m.latent_norm.scale = get_vector(is, q);
    try {
        m.validate();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("checkpoint: inconsistent model: ") + e.what());
    }
    return m;
}

void save_checkpoint(const std::filesystem::path& path, const SplitKoopmanModel& model) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("checkpoint: cannot open " + tmp);
        save_checkpoint(os, model);
    }
    std::filesystem::rename(tmp, path);
}

SplitKoopmanModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
    return load_checkpoint(is);
}

}  // namespace koopsplit
