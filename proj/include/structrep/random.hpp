#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace structrep {

using Rng = std::mt19937_64;

/// Derives an independent generator for a named sub-stream of a run seed so that
/// adding a consumer never shifts the draws seen by the others.
inline Rng make_rng(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (char c : stream) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return Rng(seq);
}

}  // namespace structrep
