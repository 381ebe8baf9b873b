#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace koopsplit {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x);

// Combines two seeds into one. Not commutative.
std::uint64_t combine_seeds(std::uint64_t a, std::uint64_t b);

// Seed for a named sub-stream of a run ("plant", "init", "channel.train", ...).
// Streams never depend on execution order, only on (master, tag).
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag);

inline Rng make_rng(std::uint64_t master, std::string_view tag) {
    return Rng(derive_seed(master, tag));
}

}  // namespace koopsplit
