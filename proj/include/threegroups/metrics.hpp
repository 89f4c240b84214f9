#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "threegroups/error.hpp"
#include "threegroups/summary.hpp"

namespace threegroups {

struct ScoredGene {
    double p_null = 0.5;
    bool non_null = false;  ///< ground truth

    [[nodiscard]] double score() const { return 1.0 - p_null; }
};

inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr double kMedianProbabilityCutoff = 0.5;

/// Two-class log score, -sum log p(true class); lower is better.
inline double log_score(std::span<const ScoredGene> genes) {
    double out = 0.0;
    for (const auto& g : genes) {
        const double p_nn = std::clamp(1.0 - g.p_null, kProbabilityFloor, 1.0 - kProbabilityFloor);
        out -= std::log(g.non_null ? p_nn : 1.0 - p_nn);
    }
    return out;
}

inline double brier_score(std::span<const ScoredGene> genes) {
    double out = 0.0;
    for (const auto& g : genes) {
        const double d = (1.0 - g.p_null) - (g.non_null ? 1.0 : 0.0);
        out += d * d;
    }
    return out;
}

/// Mann-Whitney AUC with midranks; absent unless both classes occur.
inline std::optional<double> auc(std::span<const ScoredGene> genes) {
    std::vector<std::size_t> order(genes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return genes[a].score() < genes[b].score(); });
    double rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && genes[order[j]].score() == genes[order[i]].score()) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (genes[order[k]].non_null) {
                rank_sum += midrank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = genes.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;
    const double np = static_cast<double>(n_pos);
    const double u = rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(n_neg));
}

struct OperatingPoint {
    double cutoff = 0.0;          ///< call non-null when 1 - p_null >= cutoff
    double target_fpr = 0.0;
    double mean_fpr = 0.0;        ///< achieved, averaged over replicates with nulls
    std::vector<std::optional<double>> tpr;  ///< per replicate; absent without non-null genes
    std::string diagnostic;       ///< non-empty when the target cannot be hit exactly
};

namespace detail {

inline std::optional<double> rate_at(std::span<const ScoredGene> genes, double cutoff, bool positives) {
    std::size_t total = 0, hits = 0;
    for (const auto& g : genes) {
        if (g.non_null != positives) continue;
        ++total;
        if (g.score() >= cutoff) ++hits;
    }
    if (total == 0) return std::nullopt;
    return static_cast<double>(hits) / static_cast<double>(total);
}

inline double mean_fpr_at(std::span<const std::vector<ScoredGene>> reps, double cutoff) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : reps) {
        if (auto f = rate_at(r, cutoff, false)) {
            sum += *f;
            ++n;
        }
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace detail

/// Lowest cutoff on the pooled score grid whose replicate-averaged FPR does
/// not exceed the target, found by bisection; TPRs are reported per replicate.
inline OperatingPoint tpr_at_mean_fpr(std::span<const std::vector<ScoredGene>> reps, double target_fpr) {
    if (!(target_fpr >= 0.0 && target_fpr <= 1.0)) {
        throw ValidationError(fmt::format("target FPR {} outside [0,1]", target_fpr));
    }
    bool usable = false;
    std::vector<double> grid;
    for (const auto& r : reps) {
        bool pos = false, neg = false;
        for (const auto& g : r) {
            grid.push_back(g.score());
            (g.non_null ? pos : neg) = true;
        }
        usable = usable || (pos && neg);
    }
    if (!usable) throw ValidationError("no replicate contains both null and non-null genes");
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    grid.push_back(std::nextafter(grid.back(), 2.0));  // above every score: no calls

    // mean FPR is non-increasing along the grid; find the first index within target
    std::size_t lo = 0, hi = grid.size() - 1;
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (detail::mean_fpr_at(reps, grid[mid]) <= target_fpr) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    OperatingPoint out;
    out.cutoff = grid[lo];
    out.target_fpr = target_fpr;
    out.mean_fpr = detail::mean_fpr_at(reps, out.cutoff);
    for (const auto& r : reps) out.tpr.push_back(detail::rate_at(r, out.cutoff, true));
    if (std::abs(out.mean_fpr - target_fpr) > 1e-12) {
        out.diagnostic = fmt::format("target mean FPR {} not reachable exactly; achieved {} at cutoff {}",
                                     target_fpr, out.mean_fpr, out.cutoff);
    }
    return out;
}

struct SelectedGene {
    std::string gene_id;
    GeneLabel label = GeneLabel::Deleterious;
};

/// Median probability model: P_null strictly below 0.5, tagged by the larger
/// of P_ben and P_del (ties go to Deleterious).
inline std::vector<SelectedGene> median_probability_select(const PosteriorSummary& summary) {
    std::vector<SelectedGene> out;
    for (const auto& g : summary.genes) {
        if (!(g.p_null < kMedianProbabilityCutoff)) continue;
        out.push_back({g.gene_id, g.p_ben > g.p_del ? GeneLabel::Beneficial : GeneLabel::Deleterious});
    }
    return out;
}

struct VolcanoPoint {
    std::string gene_id;
    Modality modality = Modality::Gwas;
    double marginal_effect = 0.0;
    double p_non_null = 0.0;
};

/// One point per gene and measured modality.
inline std::vector<VolcanoPoint> volcano_data(const PosteriorSummary& summary) {
    std::vector<VolcanoPoint> out;
    for (auto m : kAllModalities) {
        for (const auto& g : summary.genes) {
            const auto& marginal = m == Modality::Rna ? g.rna_marginal : g.gwas_marginal;
            if (!marginal) continue;
            out.push_back({g.gene_id, m, *marginal, 1.0 - g.p_null});
        }
    }
    return out;
}

}  // namespace threegroups
