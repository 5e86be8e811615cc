#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace flhom {

inline constexpr std::uint64_t kDefaultSeed = 20240917;

/// SplitMix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seedable generator with keyed substreams. substream(k) depends only on (seed, k),
/// so work split across delay points or repeats is reproducible in any execution order.
class Rng {
public:
    using engine_type = std::mt19937_64;
    using result_type = engine_type::result_type;

    explicit Rng(std::uint64_t seed = kDefaultSeed) : seed_(seed), engine_(expand(seed)) {}

    Rng substream(std::uint64_t key) const { return Rng(splitmix64(seed_ ^ splitmix64(key + 1))); }

    std::uint64_t seed() const { return seed_; }

    static constexpr result_type min() { return engine_type::min(); }
    static constexpr result_type max() { return engine_type::max(); }
    result_type operator()() { return engine_(); }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double normal(double mean = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mean, sd)(engine_); }
    std::uint64_t poisson(double mean);

private:
    static engine_type expand(std::uint64_t seed)
    {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(splitmix64(seed)),
                          static_cast<std::uint32_t>(splitmix64(seed) >> 32)};
        return engine_type(seq);
    }

    std::uint64_t seed_;
    engine_type engine_;
};

inline std::uint64_t Rng::poisson(double mean)
{
    if (!(mean > 0.0)) {
        return 0;
    }
    // std::poisson_distribution<int> overflows beyond ~2^31; fall back to a normal approximation there.
    if (mean > 1e9) {
        const double v = std::round(normal(mean, std::sqrt(mean)));
        return v < 0.0 ? 0 : static_cast<std::uint64_t>(v);
    }
    return static_cast<std::uint64_t>(std::poisson_distribution<long long>(mean)(engine_));
}

} // namespace flhom
