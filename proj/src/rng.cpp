#include "lgvq/rng.hpp"

#include <cmath>

#include "lgvq/error.hpp"

namespace lgvq {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::mt19937_64 make_rng(std::uint64_t seed, Stream stream, std::uint64_t counter) {
    std::uint64_t s = splitmix64(seed);
    s = splitmix64(s ^ static_cast<std::uint64_t>(stream));
    s = splitmix64(s ^ counter);
    return std::mt19937_64(s);
}

double sample_truncated_normal(std::mt19937_64& rng, double mean, double stddev, double lo, double hi) {
    if (!(lo <= hi) || !(stddev > 0.0)) {
        throw ContractError("truncated normal needs lo <= hi and stddev > 0");
    }
    std::normal_distribution<double> normal(mean, stddev);
    for (int attempt = 0; attempt < 1000000; ++attempt) {
        const double r = normal(rng);
        if (r >= lo && r <= hi) return r;
    }
    throw ContractError("truncated normal: truncation window has negligible mass");
}

}  // namespace lgvq
