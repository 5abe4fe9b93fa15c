#pragma once

// Simulation randomness. The engine is std::mt19937_64 seeded through
// std::seed_seq from a (seed, stream) pair; normal deviates come from the
// Boost.Random ziggurat sampler. Both algorithms are fully specified, so a
// given (seed, stream) reproduces the same sequence on every platform.
//
// This randomness emulates physics only. It is not a security primitive.

#include <array>
#include <cstdint>
#include <random>

#include <boost/random/normal_distribution.hpp>

namespace hqrng {

using Engine = std::mt19937_64;

/// Engine for sub-stream `stream` of `seed` (e.g. one per block index).
inline Engine make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x48515247u};
    return Engine(seq);
}

/// Standard normal source bound to an engine.
class Gaussian {
public:
    explicit Gaussian(Engine& engine) : engine_(engine) {}

    double operator()() { return dist_(engine_); }

private:
    Engine& engine_;
    boost::random::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace hqrng
