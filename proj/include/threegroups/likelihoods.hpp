#pragma once

#include <cmath>
#include <cstddef>
#include <bit>
#include <cstdint>
#include <unordered_map>
#include <span>
#include <vector>

#include <fmt/core.h>

#include "threegroups/error.hpp"
#include "threegroups/model_core.hpp"

namespace threegroups {

/// Linear predictors are clamped to this magnitude before exponentiation.
inline constexpr double kMaxExponent = 700.0;

/// Counts numerical events that would otherwise corrupt a chain silently.
struct NumericDiagnostics {
    std::size_t clamped_exponents = 0;
};

inline double clamped_exp(double eta, NumericDiagnostics* diag = nullptr) {
    if (eta > kMaxExponent || eta < -kMaxExponent) {
        if (diag != nullptr) ++diag->clamped_exponents;
        eta = eta > 0.0 ? kMaxExponent : -kMaxExponent;
    }
    return std::exp(eta);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) noexcept {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double inverse_logit(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Negative binomial
// ---------------------------------------------------------------------------

/// Part of the NB log pmf that does not depend on the mean:
/// lgamma(y + 1/phi) - lgamma(1/phi) - lgamma(y + 1).
inline double nb_log_normalizer(std::int64_t y, double phi) {
    const double size = 1.0 / phi;
    const double yd = static_cast<double>(y);
    return std::lgamma(yd + size) - std::lgamma(size) - std::lgamma(yd + 1.0);
}

/// Mean-dependent part of the NB log pmf, written in terms of the log mean
/// so that it never exponentiates a large number.
inline double nb_log_kernel(std::int64_t y, double log_mu, double log_phi) {
    const double x = log_mu + log_phi;  // log(mu * phi)
    const double sp = softplus(x);      // log(1 + mu * phi)
    return -std::exp(-log_phi) * sp + static_cast<double>(y) * (x - sp);
}

/// NB log pmf with mean mu and dispersion phi; Var = mu (1 + mu phi).
inline double nb_log_pmf(std::int64_t y, double mu, double phi) {
    if (y < 0 || !(mu > 0.0) || !(phi > 0.0) || !std::isfinite(mu) || !std::isfinite(phi)) {
        throw ValidationError(fmt::format("nb_log_pmf outside its domain: y={} mu={} phi={}", y, mu, phi));
    }
    return nb_log_normalizer(y, phi) + nb_log_kernel(y, std::log(mu), std::log(phi));
}

// ---------------------------------------------------------------------------
// RNA-seq sub-model
// ---------------------------------------------------------------------------

/// Parameters in RNA dataset gene order.
struct RnaSeqParams {
    std::vector<double> alpha;
    std::vector<double> log_fc;
    std::vector<double> phi;
    std::vector<double> beta;
};

inline double rnaseq_log_mean(double alpha_j, double log_fc_j, int k, double log_library_size,
                              double log_gene_length, double covariate_dot) {
    return alpha_j + log_fc_j * static_cast<double>(k) + log_library_size + log_gene_length + covariate_dot;
}

inline double rnaseq_mean(double alpha_j, double log_fc_j, int k, double log_library_size,
                          double log_gene_length, double covariate_dot,
                          NumericDiagnostics* diag = nullptr) {
    return clamped_exp(rnaseq_log_mean(alpha_j, log_fc_j, k, log_library_size, log_gene_length, covariate_dot),
                       diag);
}

/// x_i' beta for every row.
inline std::vector<double> covariate_dots(const Matrix<double>& x, std::span<const double> beta) {
    std::vector<double> out(x.rows(), 0.0);
    if (x.cols() != beta.size()) {
        throw ValidationError(fmt::format("covariate matrix has {} columns but {} coefficients", x.cols(),
                                          beta.size()));
    }
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) s += x(i, c) * beta[c];
        out[i] = s;
    }
    return out;
}

struct RnaLogLik {
    double total = 0.0;
    std::vector<double> per_gene;
};

/// Log-likelihood of one gene given the per-sample covariate dots.
inline double rnaseq_gene_loglik(const RnaSeqDataset& ds, std::size_t gene, double alpha, double log_fc,
                                 double log_phi, std::span<const double> cov_dot,
                                 NumericDiagnostics* diag = nullptr) {
    const double phi = std::exp(log_phi);
    double out = 0.0;
    for (std::size_t i = 0; i < ds.n_samples(); ++i) {
        double eta = rnaseq_log_mean(alpha, log_fc, ds.treatment[i], ds.log_library_size[i],
                                     ds.log_gene_length[gene], cov_dot[i]);
        if (eta > kMaxExponent || eta < -kMaxExponent) {
            if (diag != nullptr) ++diag->clamped_exponents;
            eta = eta > 0.0 ? kMaxExponent : -kMaxExponent;
        }
        const std::int64_t y = ds.counts(i, gene);
        out += nb_log_normalizer(y, phi) + nb_log_kernel(y, eta, log_phi);
    }
    return out;
}

inline RnaLogLik rnaseq_loglik(const RnaSeqDataset& ds, const RnaSeqParams& p,
                               NumericDiagnostics* diag = nullptr) {
    const std::size_t J = ds.n_genes();
    if (p.alpha.size() != J || p.log_fc.size() != J || p.phi.size() != J) {
        throw ValidationError("RNA-seq parameter vectors do not match the gene count");
    }
    const auto dots = covariate_dots(ds.covariates, p.beta);
    RnaLogLik out;
    out.per_gene.resize(J);
    for (std::size_t j = 0; j < J; ++j) {
        out.per_gene[j] = rnaseq_gene_loglik(ds, j, p.alpha[j], p.log_fc[j], std::log(p.phi[j]), dots, diag);
        out.total += out.per_gene[j];
    }
    return out;
}

// ---------------------------------------------------------------------------
// GWAS sub-model
// ---------------------------------------------------------------------------

/// Parameters in GWAS dataset gene order.
struct GwasParams {
    std::vector<double> gamma;
    std::vector<double> beta;
};

/// eta_i = z_i' gamma + x_i' beta.
inline std::vector<double> logistic_linear_predictor(const GwasDataset& ds, const GwasParams& p) {
    if (p.gamma.size() != ds.n_genes()) {
        throw ValidationError("GWAS effect vector does not match the gene count");
    }
    auto eta = covariate_dots(ds.covariates, p.beta);
    for (std::size_t i = 0; i < ds.n_individuals(); ++i) {
        for (std::size_t j = 0; j < ds.n_genes(); ++j) {
            if (ds.carrier(i, j) != 0) eta[i] += p.gamma[j];
        }
    }
    return eta;
}

inline double logistic_term(int y, double eta) noexcept {
    return static_cast<double>(y) * eta - softplus(eta);
}

inline double logistic_loglik_from_eta(const GwasDataset& ds, std::span<const double> eta) {
    double out = 0.0;
    for (std::size_t i = 0; i < ds.n_individuals(); ++i) out += logistic_term(ds.outcome[i], eta[i]);
    return out;
}

inline double logistic_loglik(const GwasDataset& ds, const GwasParams& p) {
    const auto eta = logistic_linear_predictor(ds, p);
    return logistic_loglik_from_eta(ds, eta);
}

/// Row indices of carriers, one list per gene column.
inline std::vector<std::vector<std::uint32_t>> carrier_lists(const GwasDataset& ds) {
    std::vector<std::vector<std::uint32_t>> out(ds.n_genes());
    for (std::size_t i = 0; i < ds.n_individuals(); ++i) {
        for (std::size_t j = 0; j < ds.n_genes(); ++j) {
            if (ds.carrier(i, j) != 0) out[j].push_back(static_cast<std::uint32_t>(i));
        }
    }
    return out;
}

/// Change in the logistic log-likelihood when gamma_j moves by delta; only
/// carriers of gene j are touched.
inline double logistic_gene_delta(const GwasDataset& ds, std::span<const std::uint32_t> carriers,
                                  std::span<const double> eta, double delta) {
    double out = 0.0;
    for (auto i : carriers) {
        out += logistic_term(ds.outcome[i], eta[i] + delta) - logistic_term(ds.outcome[i], eta[i]);
    }
    return out;
}

/// Individuals grouped by bitwise-equal linear predictor. Log-likelihood
/// changes are then evaluated once per class instead of once per individual,
/// which is exact and cheap while few genes carry non-zero effects.
class LogisticClasses {
public:
    void rebuild(std::span<const double> eta, std::span<const int> outcome) {
        std::unordered_map<std::uint64_t, std::uint32_t> index;
        class_eta_.clear();
        class_size_.clear();
        class_of_.resize(eta.size());
        total_cases_ = 0.0;
        for (std::size_t i = 0; i < eta.size(); ++i) {
            const auto [it, fresh] =
                index.emplace(std::bit_cast<std::uint64_t>(eta[i]), static_cast<std::uint32_t>(class_eta_.size()));
            if (fresh) {
                class_eta_.push_back(eta[i]);
                class_size_.push_back(0.0);
            }
            class_of_[i] = it->second;
            class_size_[it->second] += 1.0;
            total_cases_ += static_cast<double>(outcome[i]);
        }
        touched_.assign(class_eta_.size(), 0);
    }

    [[nodiscard]] std::size_t n_classes() const noexcept { return class_eta_.size(); }

    /// Log-likelihood change when the predictors of `carriers` move by d and
    /// every predictor moves by `shift`; `carrier_cases` is the number of
    /// cases among the carriers.
    [[nodiscard]] double delta(std::span<const std::uint32_t> carriers, double carrier_cases, double d,
                               double shift) const {
        for (auto i : carriers) ++touched_[class_of_[i]];
        double sp = 0.0;
        for (std::size_t k = 0; k < class_eta_.size(); ++k) {
            const double nc = static_cast<double>(touched_[k]);
            const double nn = class_size_[k] - nc;
            if (nc == 0.0 && (nn == 0.0 || shift == 0.0)) continue;
            const double base = softplus(class_eta_[k]);
            if (nc > 0.0) sp += nc * (softplus(class_eta_[k] + shift + d) - base);
            if (nn > 0.0 && shift != 0.0) sp += nn * (softplus(class_eta_[k] + shift) - base);
            touched_[k] = 0;
        }
        return d * carrier_cases + shift * total_cases_ - sp;
    }

private:
    std::vector<double> class_eta_;
    std::vector<double> class_size_;
    std::vector<std::uint32_t> class_of_;
    mutable std::vector<std::uint32_t> touched_;
    double total_cases_ = 0.0;
};

/// d loglik / d gamma_j for every gene column.
inline std::vector<double> logistic_gradient_gamma(const GwasDataset& ds, const GwasParams& p) {
    const auto eta = logistic_linear_predictor(ds, p);
    std::vector<double> grad(ds.n_genes(), 0.0);
    for (std::size_t i = 0; i < ds.n_individuals(); ++i) {
        const double resid = static_cast<double>(ds.outcome[i]) - inverse_logit(eta[i]);
        for (std::size_t j = 0; j < ds.n_genes(); ++j) {
            if (ds.carrier(i, j) != 0) grad[j] += resid;
        }
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Joint model
// ---------------------------------------------------------------------------

/// All sub-model parameters indexed by union gene. Genes absent from a
/// modality still carry (imputed) values; they never enter that modality's
/// likelihood.
struct JointParams {
    std::vector<double> alpha;
    std::vector<double> log_fc;
    std::vector<double> log_phi;
    std::vector<double> beta_rna;
    std::vector<double> gamma;
    std::vector<double> beta_gwas;
};

inline RnaSeqParams rna_params(const JointParams& p, const GeneAlignment& align) {
    RnaSeqParams out;
    for (std::size_t u : align.rna_to_union) {
        out.alpha.push_back(p.alpha[u]);
        out.log_fc.push_back(p.log_fc[u]);
        out.phi.push_back(std::exp(p.log_phi[u]));
    }
    out.beta = p.beta_rna;
    return out;
}

inline GwasParams gwas_params(const JointParams& p, const GeneAlignment& align) {
    GwasParams out;
    for (std::size_t u : align.gwas_to_union) out.gamma.push_back(p.gamma[u]);
    out.beta = p.beta_gwas;
    return out;
}

/// Product of the sub-model likelihoods given shared labels; a missing
/// dataset contributes zero.
inline double joint_loglik(const RnaSeqDataset* rna, const GwasDataset* gwas, const GeneAlignment& align,
                           const JointParams& p, NumericDiagnostics* diag = nullptr) {
    double out = 0.0;
    if (rna != nullptr && rna->n_genes() > 0) out += rnaseq_loglik(*rna, rna_params(p, align), diag).total;
    if (gwas != nullptr && gwas->n_genes() > 0) out += logistic_loglik(*gwas, gwas_params(p, align));
    return out;
}

}  // namespace threegroups
