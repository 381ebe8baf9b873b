#pragma once

#include <filesystem>
#include <iosfwd>

#include "koopsplit/koopman_model.hpp"

namespace koopsplit {

// Binary, little-endian:
//   char[8]  "KSPLITCK"
//   u32      version (1)
//   u32      state_dim D, u32 latent_dim q
//   net      encoder
//   f64[q*q] K, row-major
//   net      decoder
//   f64[D]   state mean, f64[D] state scale, f64[q] latent mean, f64[q] latent scale
// where net = u32 layer count, then per layer: u32 in, u32 out, u8 activation
// (0 relu, 1 linear), f64[out*in] weight row-major, f64[out] bias.
inline constexpr char kCheckpointMagic[8] = {'K', 'S', 'P', 'L', 'I', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(std::ostream& os, const SplitKoopmanModel& model);
SplitKoopmanModel load_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const SplitKoopmanModel& model);
SplitKoopmanModel load_checkpoint(const std::filesystem::path& path);

}  // namespace koopsplit
