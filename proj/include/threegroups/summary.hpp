#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "threegroups/error.hpp"
#include "threegroups/sampler.hpp"

namespace threegroups {

struct GeneSummary {
    std::string gene_id;
    bool in_rna = false;
    bool in_gwas = false;
    double p_null = 1.0;
    double p_del = 0.0;
    double p_ben = 0.0;
    std::optional<double> gwas_conditional;  ///< mean gamma over non-null iterations
    std::optional<double> rna_conditional;   ///< mean log fold change over non-null iterations
    std::optional<double> gwas_marginal;     ///< mean gamma over all iterations, zeros included
    std::optional<double> rna_marginal;
    std::optional<double> dispersion;        ///< posterior mean phi

    [[nodiscard]] double p_non_null() const { return p_del + p_ben; }
    /// Null in more than 99% of retained iterations.
    [[nodiscard]] bool mostly_null() const { return p_non_null() < 0.01; }
    [[nodiscard]] std::optional<double> odds_ratio() const {
        return gwas_conditional ? std::optional(std::exp(*gwas_conditional)) : std::nullopt;
    }
    [[nodiscard]] std::optional<double> fold_change() const {
        return rna_conditional ? std::optional(std::exp(*rna_conditional)) : std::nullopt;
    }
};

struct PosteriorSummary {
    std::vector<GeneSummary> genes;
    std::size_t retained = 0;
    ModalitySet modalities;
};

/// Pool the post-burn-in records of one or more chains over the same genes.
inline PosteriorSummary summarize(std::span<const Trace> traces, std::size_t burn_in) {
    if (traces.empty()) throw ValidationError("no traces to summarize");
    const Trace& first = traces.front();
    const std::size_t J = first.gene_ids.size();
    for (const auto& t : traces) {
        if (t.gene_ids != first.gene_ids) throw ValidationError("traces cover different gene sets");
    }

    PosteriorSummary out;
    out.modalities = first.modalities;
    std::vector<GroupCounts> occ(J, GroupCounts{0, 0, 0});
    std::vector<double> sum_rna(J, 0.0), sum_gwas(J, 0.0), sum_phi(J, 0.0);
    for (const auto& t : traces) {
        for (const auto& rec : t.records) {
            if (rec.iteration < burn_in) continue;
            ++out.retained;
            for (std::size_t u = 0; u < J; ++u) ++occ[u][label_slot(rec.labels[u])];
            for (const auto& [u, e] : rec.rna_effects) sum_rna[u] += e;
            for (const auto& [u, e] : rec.gwas_effects) sum_gwas[u] += e;
            for (std::size_t u = 0; u < rec.log_phi.size(); ++u) sum_phi[u] += std::exp(rec.log_phi[u]);
        }
    }
    if (out.retained == 0) {
        throw ValidationError(fmt::format("no iterations retained after burn-in {}", burn_in));
    }

    const double n = static_cast<double>(out.retained);
    out.genes.resize(J);
    for (std::size_t u = 0; u < J; ++u) {
        auto& g = out.genes[u];
        g.gene_id = first.gene_ids[u];
        g.in_rna = first.in_rna[u] != 0;
        g.in_gwas = first.in_gwas[u] != 0;
        g.p_null = static_cast<double>(occ[u][0]) / n;
        g.p_del = static_cast<double>(occ[u][1]) / n;
        g.p_ben = static_cast<double>(occ[u][2]) / n;
        const double nn = static_cast<double>(occ[u][1] + occ[u][2]);
        if (g.in_rna) {
            g.rna_marginal = sum_rna[u] / n;
            if (nn > 0) g.rna_conditional = sum_rna[u] / nn;
            g.dispersion = sum_phi[u] / n;
        }
        if (g.in_gwas) {
            g.gwas_marginal = sum_gwas[u] / n;
            if (nn > 0) g.gwas_conditional = sum_gwas[u] / nn;
        }
    }
    return out;
}

inline PosteriorSummary summarize(const Trace& trace, std::size_t burn_in) {
    return summarize(std::span<const Trace>(&trace, 1), burn_in);
}

/// Per-iteration count of non-null genes after burn-in.
inline std::vector<double> non_null_series(const Trace& trace, std::size_t burn_in) {
    std::vector<double> out;
    for (const auto& rec : trace.records) {
        if (rec.iteration < burn_in) continue;
        std::size_t k = 0;
        for (auto g : rec.labels) k += is_null(g) ? 0 : 1;
        out.push_back(static_cast<double>(k));
    }
    return out;
}

/// Per-iteration non-null indicator of one gene after burn-in.
inline std::vector<double> occupancy_series(const Trace& trace, std::size_t gene, GeneLabel label,
                                            std::size_t burn_in) {
    std::vector<double> out;
    for (const auto& rec : trace.records) {
        if (rec.iteration < burn_in) continue;
        out.push_back(rec.labels[gene] == label ? 1.0 : 0.0);
    }
    return out;
}

}  // namespace threegroups
