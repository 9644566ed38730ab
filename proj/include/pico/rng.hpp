#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pico {

using Rng = std::mt19937_64;

// Seed of a named substream ("corpus", "init", "training", "verify", ...).
// Every random draw in the project goes through one of these so that a
// single run seed reproduces all artifacts.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

inline Rng substream(std::uint64_t seed, std::string_view stream) { return Rng(derive_seed(seed, stream)); }

}  // namespace pico
