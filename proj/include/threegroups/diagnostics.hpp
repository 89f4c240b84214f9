#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace threegroups {

/// Sample autocovariance at lag 0..max_lag (biased, divides by n).
inline std::vector<double> autocovariance(std::span<const double> x, std::size_t max_lag) {
    const std::size_t n = x.size();
    std::vector<double> out(std::min(max_lag + 1, n), 0.0);
    if (n == 0) return out;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    for (std::size_t lag = 0; lag < out.size(); ++lag) {
        double s = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - mean) * (x[i + lag] - mean);
        out[lag] = s / static_cast<double>(n);
    }
    return out;
}

/// Effective sample size by Geyer's initial monotone positive sequence.
/// A constant series returns n.
inline double effective_sample_size(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 4) return static_cast<double>(n);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    auto acov = [&](std::size_t lag) {
        double s = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - mean) * (x[i + lag] - mean);
        return s / static_cast<double>(n);
    };
    const double c0 = acov(0);
    if (!(c0 > 0.0)) return static_cast<double>(n);
    double sum = 0.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < n; k += 2) {
        double pair = (acov(k) + acov(k + 1)) / c0;
        if (pair <= 0.0) break;
        pair = std::min(pair, prev_pair);
        sum += pair;
        prev_pair = pair;
    }
    const double tau = std::max(2.0 * sum - 1.0, 1.0 / static_cast<double>(n));
    return std::min(static_cast<double>(n) / tau, static_cast<double>(n) * std::log10(static_cast<double>(n)));
}

/// Monte Carlo standard error of the mean by non-overlapping batch means.
inline double batch_means_se(std::span<const double> x, std::size_t n_batches = 25) {
    const std::size_t n = x.size();
    if (n < 2 * n_batches) n_batches = std::max<std::size_t>(n / 2, 1);
    const std::size_t b = n / n_batches;
    if (b == 0 || n_batches < 2) return 0.0;
    std::vector<double> means(n_batches, 0.0);
    double grand = 0.0;
    for (std::size_t k = 0; k < n_batches; ++k) {
        for (std::size_t i = 0; i < b; ++i) means[k] += x[k * b + i];
        means[k] /= static_cast<double>(b);
        grand += means[k];
    }
    grand /= static_cast<double>(n_batches);
    double var = 0.0;
    for (double m : means) var += (m - grand) * (m - grand);
    var /= static_cast<double>(n_batches - 1);
    return std::sqrt(var / static_cast<double>(n_batches));
}

}  // namespace threegroups
