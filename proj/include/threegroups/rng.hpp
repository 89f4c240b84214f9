#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace threegroups {

using Rng = std::mt19937_64;

/// Seed for an independent stream, derived from a master seed and a stream
/// id (chain index, replicate index).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(master),
                      static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32), 0x7467u};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline double draw_uniform(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double draw_normal(Rng& rng, double mean = 0.0, double sd = 1.0) {
    return std::normal_distribution<double>(mean, sd)(rng);
}

/// Gamma with shape and *rate*.
inline double draw_gamma(Rng& rng, double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

inline double draw_beta(Rng& rng, double a, double b) {
    const double x = draw_gamma(rng, a, 1.0);
    const double y = draw_gamma(rng, b, 1.0);
    return x / (x + y);
}

inline bool draw_bernoulli(Rng& rng, double p) {
    return draw_uniform(rng) < p;
}

inline std::int64_t draw_binomial(Rng& rng, std::int64_t n, double p) {
    if (n <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    return std::binomial_distribution<std::int64_t>(n, p)(rng);
}

inline std::int64_t draw_poisson(Rng& rng, double mean) {
    if (mean <= 0.0) return 0;
    return std::poisson_distribution<std::int64_t>(mean)(rng);
}

/// Negative binomial with mean mu and dispersion phi (variance mu(1+mu*phi)),
/// drawn as a gamma-Poisson mixture.
inline std::int64_t draw_negative_binomial(Rng& rng, double mu, double phi) {
    const double size = 1.0 / phi;
    return draw_poisson(rng, draw_gamma(rng, size, size / mu));
}

/// Log acceptance test: true with probability min(1, exp(log_ratio)).
inline bool accept_log(Rng& rng, double log_ratio) {
    if (log_ratio >= 0.0) return true;
    if (!std::isfinite(log_ratio)) return false;
    return std::log(draw_uniform(rng)) < log_ratio;
}

}  // namespace threegroups
