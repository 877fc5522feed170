#pragma once

#include <cstdint>
#include <random>

namespace pen {

// Independent generator streams derived from one run seed.
enum class Stream : std::uint32_t { Init = 1, Shuffle = 2, TrainDemos = 3, EvalDemos = 4, Pool = 5 };

inline std::mt19937_64 make_rng(std::uint64_t seed, Stream stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

}  // namespace pen
