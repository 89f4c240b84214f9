#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "threegroups/error.hpp"
#include "threegroups/model_core.hpp"
#include "threegroups/rng.hpp"

namespace threegroups {

enum class Baseline : std::uint8_t { SyntheticNB, ThinCounts };

struct SimConfig {
    std::size_t n_genes = 50;
    std::size_t n_ben = 2;
    std::size_t n_del = 2;
    std::size_t n_gwas = 1000;
    std::size_t n_rna = 100;
    std::vector<double> gwas_effects{0.5, 1.0};  ///< magnitudes, cycled over non-null genes
    std::vector<double> rna_log2_fc{0.5, 1.0};   ///< magnitudes, cycled over non-null genes
    double maf_a = 20.0;
    double maf_b = 35.0;
    double intercept_sd = 1.0;
    std::optional<double> fixed_intercept;
    double treated_fraction = 0.5;
    Baseline baseline = Baseline::SyntheticNB;
    std::string baseline_path;                   ///< counts file for ThinCounts
    double base_log_mean = std::log(200.0);
    double base_log_mean_sd = 1.0;
    double log_dispersion_mean = std::log(0.1);
    double log_dispersion_sd = 0.5;
    double library_sd = 0.2;
    double gene_length_sd = 0.3;
    std::uint64_t seed = 1;

    void validate() const {
        if (n_genes == 0) throw ValidationError("n_genes must be positive");
        if (n_ben + n_del > n_genes) {
            throw ValidationError(fmt::format("n_ben + n_del ({}) exceeds n_genes ({})", n_ben + n_del, n_genes));
        }
        for (const auto* v : {&gwas_effects, &rna_log2_fc}) {
            if (v->empty()) throw ValidationError("effect magnitude lists must not be empty");
            for (double e : *v) {
                if (!(e > 0.0) || !std::isfinite(e)) {
                    throw ValidationError(fmt::format("effect magnitudes must be positive and finite, got {}", e));
                }
            }
        }
        if (!(maf_a > 0.0 && maf_b > 0.0)) throw ValidationError("MAF Beta parameters must be positive");
        if (!(treated_fraction > 0.0 && treated_fraction < 1.0)) {
            throw ValidationError("treated_fraction must lie in (0,1)");
        }
        for (double s : {intercept_sd, base_log_mean_sd, log_dispersion_sd, library_sd, gene_length_sd}) {
            if (!(s >= 0.0)) throw ValidationError("standard deviations must be non-negative");
        }
    }
};

struct SimTruth {
    std::vector<std::string> gene_ids;
    LabelVector labels;
    std::vector<double> gwas_effect;  ///< log odds ratio, 0 for Null
    std::vector<double> rna_log_fc;   ///< natural-log fold change, 0 for Null

    [[nodiscard]] std::vector<double> rna_log2_fc() const {
        std::vector<double> out;
        for (double v : rna_log_fc) out.push_back(v / std::log(2.0));
        return out;
    }
};

inline std::string sim_gene_id(std::size_t j) { return fmt::format("g{:04d}", j + 1); }

/// Labels at random positions; effect magnitudes cycle through the configured
/// lists in gene order.
inline SimTruth make_truth(const SimConfig& cfg, Rng& rng, std::vector<std::string> gene_ids = {}) {
    cfg.validate();
    const std::size_t J = cfg.n_genes;
    if (gene_ids.empty()) {
        for (std::size_t j = 0; j < J; ++j) gene_ids.push_back(sim_gene_id(j));
    }
    if (gene_ids.size() != J) throw ValidationError("gene id list does not match n_genes");
    std::vector<std::size_t> pos(J);
    std::iota(pos.begin(), pos.end(), 0);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::vector<GeneLabel> labels(J, GeneLabel::Null);
    for (std::size_t k = 0; k < cfg.n_del; ++k) labels[pos[k]] = GeneLabel::Deleterious;
    for (std::size_t k = 0; k < cfg.n_ben; ++k) labels[pos[cfg.n_del + k]] = GeneLabel::Beneficial;

    SimTruth t;
    t.gene_ids = std::move(gene_ids);
    t.labels = LabelVector(labels);
    t.gwas_effect.assign(J, 0.0);
    t.rna_log_fc.assign(J, 0.0);
    std::size_t k = 0;
    for (std::size_t j = 0; j < J; ++j) {
        if (is_null(labels[j])) continue;
        const double s = label_sign(labels[j]);
        t.gwas_effect[j] = s * cfg.gwas_effects[k % cfg.gwas_effects.size()];
        t.rna_log_fc[j] = s * cfg.rna_log2_fc[k % cfg.rna_log2_fc.size()] * std::log(2.0);
        ++k;
    }
    return t;
}

inline GwasDataset gen_gwas(const SimConfig& cfg, const SimTruth& truth, Rng& rng) {
    const std::size_t J = truth.gene_ids.size();
    const std::size_t n = cfg.n_gwas;
    GwasDataset ds;
    ds.gene_ids = truth.gene_ids;
    ds.carrier = Matrix<int>(n, J, 0);
    ds.covariates = intercept_only(n);
    ds.outcome.resize(n);
    std::vector<double> maf(J);
    for (auto& m : maf) m = draw_beta(rng, cfg.maf_a, cfg.maf_b);
    const double intercept = cfg.fixed_intercept ? *cfg.fixed_intercept : draw_normal(rng, 0.0, cfg.intercept_sd);
    for (std::size_t i = 0; i < n; ++i) {
        ds.individual_ids.push_back(fmt::format("i{:05d}", i + 1));
        double eta = intercept;
        for (std::size_t j = 0; j < J; ++j) {
            const int z = draw_bernoulli(rng, maf[j]) ? 1 : 0;
            ds.carrier(i, j) = z;
            if (z != 0) eta += truth.gwas_effect[j];
        }
        ds.outcome[i] = draw_bernoulli(rng, 1.0 / (1.0 + std::exp(-eta))) ? 1 : 0;
    }
    return ds;
}

namespace detail {

/// Exactly round(n * fraction) samples treated, at random positions.
inline std::vector<int> random_split(std::size_t n, double fraction, Rng& rng) {
    std::vector<int> k(n, 0);
    const auto n_treated = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
    std::fill(k.begin(), k.begin() + static_cast<std::ptrdiff_t>(std::min(n_treated, n)), 1);
    std::shuffle(k.begin(), k.end(), rng);
    return k;
}

}  // namespace detail

/// Synthetic NB baseline with log-normal gene means and dispersions.
inline RnaSeqDataset gen_rnaseq_synthetic(const SimConfig& cfg, const SimTruth& truth, Rng& rng) {
    const std::size_t J = truth.gene_ids.size();
    const std::size_t n = cfg.n_rna;
    RnaSeqDataset ds;
    ds.gene_ids = truth.gene_ids;
    ds.treatment = detail::random_split(n, cfg.treated_fraction, rng);
    ds.covariates = Matrix<double>(n, 0);
    ds.counts = Matrix<std::int64_t>(n, J, 0);
    for (std::size_t i = 0; i < n; ++i) {
        ds.sample_ids.push_back(fmt::format("s{:04d}", i + 1));
        ds.log_library_size.push_back(draw_normal(rng, 0.0, cfg.library_sd));
    }
    for (std::size_t j = 0; j < J; ++j) {
        ds.log_gene_length.push_back(draw_normal(rng, 0.0, cfg.gene_length_sd));
        const double base = draw_normal(rng, cfg.base_log_mean, cfg.base_log_mean_sd);
        const double phi = std::exp(draw_normal(rng, cfg.log_dispersion_mean, cfg.log_dispersion_sd));
        for (std::size_t i = 0; i < n; ++i) {
            const double log_mu = base + ds.log_library_size[i] + ds.log_gene_length[j] +
                                  (ds.treatment[i] == 1 ? truth.rna_log_fc[j] : 0.0);
            ds.counts(i, j) = draw_negative_binomial(rng, std::exp(log_mu), phi);
        }
    }
    return ds;
}

inline constexpr double kMinThinningProbability = 1e-6;

/// Inject fold changes into a real count matrix (sample x gene) by binomial
/// thinning of the disadvantaged group: the control group when the target
/// log2 fold change b is positive, the treatment group when it is negative,
/// each count kept with probability 2^-|b|.
inline RnaSeqDataset gen_rnaseq_thinned(const Matrix<std::int64_t>& baseline, const SimConfig& cfg,
                                        const SimTruth& truth, Rng& rng) {
    const std::size_t n = baseline.rows();
    const std::size_t J = truth.gene_ids.size();
    if (baseline.cols() != J) {
        throw ValidationError(fmt::format("baseline has {} genes but the truth has {}", baseline.cols(), J));
    }
    const auto log2fc = truth.rna_log2_fc();
    for (double b : log2fc) {
        if (std::exp2(-std::abs(b)) < kMinThinningProbability) {
            throw ValidationError(fmt::format("log2 fold change {} needs a thinning probability below {}", b,
                                              kMinThinningProbability));
        }
    }
    RnaSeqDataset ds;
    ds.gene_ids = truth.gene_ids;
    ds.treatment = detail::random_split(n, cfg.treated_fraction, rng);
    ds.covariates = Matrix<double>(n, 0);
    ds.counts = baseline;
    ds.log_gene_length.assign(J, 0.0);
    for (std::size_t j = 0; j < J; ++j) {
        const double b = log2fc[j];
        if (b == 0.0) continue;
        const int thinned_group = b > 0.0 ? 0 : 1;
        const double p = std::exp2(-std::abs(b));
        for (std::size_t i = 0; i < n; ++i) {
            if (ds.treatment[i] == thinned_group) ds.counts(i, j) = draw_binomial(rng, ds.counts(i, j), p);
        }
    }
    std::vector<double> totals(n, 0.0);
    double mean_log_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < J; ++j) totals[i] += static_cast<double>(ds.counts(i, j));
        totals[i] = std::log(std::max(totals[i], 1.0));
        mean_log_total += totals[i];
    }
    if (n > 0) mean_log_total /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        ds.sample_ids.push_back(fmt::format("s{:04d}", i + 1));
        ds.log_library_size.push_back(totals[i] - mean_log_total);
    }
    return ds;
}

struct Replicate {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    SimTruth truth;
    GwasDataset gwas;
    RnaSeqDataset rna;
};

/// One replicate with independent streams for truth, GWAS and RNA-seq.
/// `baseline` is required when cfg.baseline is ThinCounts; its gene ids are used.
inline Replicate gen_replicate(const SimConfig& cfg, std::size_t index, const Matrix<std::int64_t>* baseline = nullptr,
                               const std::vector<std::string>& baseline_ids = {}) {
    cfg.validate();
    Replicate rep;
    rep.index = index;
    rep.seed = derive_seed(cfg.seed, index);
    Rng truth_rng(derive_seed(rep.seed, 0));
    Rng gwas_rng(derive_seed(rep.seed, 1));
    Rng rna_rng(derive_seed(rep.seed, 2));
    if (cfg.baseline == Baseline::ThinCounts) {
        if (baseline == nullptr) throw ValidationError("thinning baseline requested but no count matrix given");
        rep.truth = make_truth(cfg, truth_rng, baseline_ids);
        rep.rna = gen_rnaseq_thinned(*baseline, cfg, rep.truth, rna_rng);
    } else {
        rep.truth = make_truth(cfg, truth_rng);
        rep.rna = gen_rnaseq_synthetic(cfg, rep.truth, rna_rng);
    }
    rep.gwas = gen_gwas(cfg, rep.truth, gwas_rng);
    return rep;
}

inline std::vector<Replicate> gen_replicates(const SimConfig& cfg, std::size_t n_reps,
                                             const Matrix<std::int64_t>* baseline = nullptr,
                                             const std::vector<std::string>& baseline_ids = {}) {
    std::vector<Replicate> out;
    out.reserve(n_reps);
    for (std::size_t r = 0; r < n_reps; ++r) out.push_back(gen_replicate(cfg, r, baseline, baseline_ids));
    return out;
}

}  // namespace threegroups
