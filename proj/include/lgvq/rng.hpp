#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lgvq {

/// Independent random streams. Every consumer of randomness draws from its
/// own stream so that switching one loss off never shifts the random numbers
/// seen by another.
enum class Stream : std::uint64_t {
    Init = 1,
    Data = 2,
    Mask = 3,
    Pairs = 4,
    Text = 5,
    Eval = 6,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based seeding: the generator for (seed, stream, counter) is a pure
/// function of its arguments, so a run can be resumed from (seed, step) alone.
std::mt19937_64 make_rng(std::uint64_t seed, Stream stream, std::uint64_t counter = 0);

/// Truncated normal on [lo, hi] by rejection.
double sample_truncated_normal(std::mt19937_64& rng, double mean, double stddev, double lo, double hi);

}  // namespace lgvq
