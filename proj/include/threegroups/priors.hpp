#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>

#include <fmt/core.h>

#include "threegroups/error.hpp"
#include "threegroups/model_core.hpp"
#include "threegroups/rng.hpp"

namespace threegroups {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Modality : std::uint8_t { Rna = 0, Gwas = 1 };
enum class Sign : std::uint8_t { Positive = 0, Negative = 1 };

inline constexpr std::array<Modality, 2> kAllModalities{Modality::Rna, Modality::Gwas};
inline constexpr std::array<Sign, 2> kAllSigns{Sign::Positive, Sign::Negative};

constexpr std::size_t slot(Modality m) noexcept { return static_cast<std::size_t>(m); }
constexpr std::size_t slot(Sign s) noexcept { return static_cast<std::size_t>(s); }

/// Deleterious effects live on the positive half-line, beneficial on the negative.
constexpr Sign sign_of(GeneLabel g) noexcept {
    return g == GeneLabel::Beneficial ? Sign::Negative : Sign::Positive;
}

inline const char* modality_name(Modality m) noexcept { return m == Modality::Rna ? "rna" : "gwas"; }

/// Which sub-models take part in a fit.
struct ModalitySet {
    bool rna = true;
    bool gwas = true;

    [[nodiscard]] bool has(Modality m) const noexcept { return m == Modality::Rna ? rna : gwas; }
    bool operator==(const ModalitySet&) const = default;
};

inline ModalitySet parse_modality_set(std::string_view s) {
    if (s == "rna") return {true, false};
    if (s == "gwas") return {false, true};
    if (s == "joint") return {true, true};
    throw ValidationError(fmt::format("unknown modality '{}' (expected rna, gwas or joint)", s));
}

inline std::string modality_set_name(ModalitySet m) {
    if (m.rna && m.gwas) return "joint";
    return m.rna ? "rna" : "gwas";
}

enum class PriorFamily : std::uint8_t {
    LocalFixed,             ///< symmetric half-normal slabs, fixed scale
    LocalHyper,             ///< asymmetric truncated normals, mu ~ inverse gamma, sigma ~ half-piMOM
    NonlocalFixed,          ///< symmetric half-piMOM slabs, fixed tau
    NonlocalPimomHyper,     ///< asymmetric half-piMOM slabs, tau ~ half-piMOM
    NonlocalInvGammaHyper,  ///< asymmetric half-piMOM slabs, tau ~ inverse gamma
};

inline constexpr std::array<PriorFamily, 5> kAllFamilies{
    PriorFamily::LocalFixed, PriorFamily::LocalHyper, PriorFamily::NonlocalFixed,
    PriorFamily::NonlocalPimomHyper, PriorFamily::NonlocalInvGammaHyper};

inline const char* family_name(PriorFamily f) noexcept {
    switch (f) {
        case PriorFamily::LocalFixed: return "local-fixed";
        case PriorFamily::LocalHyper: return "local-hyper";
        case PriorFamily::NonlocalFixed: return "nonlocal-fixed";
        case PriorFamily::NonlocalPimomHyper: return "nonlocal-pimom";
        case PriorFamily::NonlocalInvGammaHyper: return "nonlocal-invgamma";
    }
    return "?";
}

inline PriorFamily parse_family(std::string_view s) {
    for (auto f : kAllFamilies) {
        if (s == family_name(f)) return f;
    }
    throw ValidationError(fmt::format("unknown prior family '{}'", s));
}

constexpr bool is_local(PriorFamily f) noexcept {
    return f == PriorFamily::LocalFixed || f == PriorFamily::LocalHyper;
}

constexpr bool has_effect_hyper(PriorFamily f) noexcept {
    return f == PriorFamily::LocalHyper || f == PriorFamily::NonlocalPimomHyper ||
           f == PriorFamily::NonlocalInvGammaHyper;
}

struct DirichletConfig {
    double kappa = 1.0;
    std::array<double, 3> a{1.0, 1.0, 1.0};

    void validate() const {
        if (!(kappa > 0.0)) throw ValidationError(fmt::format("kappa must be > 0, got {}", kappa));
        for (double ai : a) {
            if (!(ai > 0.0)) throw ValidationError(fmt::format("Dirichlet a must be > 0, got {}", ai));
        }
    }
};

struct PriorConfig {
    PriorFamily family = PriorFamily::NonlocalPimomHyper;
    DirichletConfig dirichlet;
    double r = 2.0;                   ///< piMOM tail decay of the effect slabs
    double local_scale = 1.0;         ///< half-normal scale, LocalFixed
    double fixed_tau = 1.0;           ///< piMOM scale, NonlocalFixed; start value for hyper families
    double hyper_tau = 1.0;           ///< half-piMOM hyper-prior on tau / sigma
    double hyper_r = 2.0;
    double invgamma_shape = 2.0;      ///< inverse-gamma hyper-prior on tau, NonlocalInvGammaHyper
    double invgamma_scale = 2.0;
    double local_mu_shape = 2.0;      ///< inverse-gamma hyper-prior on mu, LocalHyper
    double local_mu_scale = 2.0;
    double halft_nu = 4.0;            ///< half-t prior on the dispersion precision tau0
    double halft_scale = 1.0;
    double mu0_precision = 1e-2;
    double nuisance_precision = 1e-3; ///< alpha_j and covariate coefficients

    void validate() const {
        dirichlet.validate();
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw ValidationError(fmt::format("prior parameter {} must be positive and finite, got {}", name, v));
            }
        };
        positive(r, "r");
        positive(local_scale, "local_scale");
        positive(fixed_tau, "fixed_tau");
        positive(hyper_tau, "hyper_tau");
        positive(hyper_r, "hyper_r");
        positive(invgamma_shape, "invgamma_shape");
        positive(invgamma_scale, "invgamma_scale");
        positive(local_mu_shape, "local_mu_shape");
        positive(local_mu_scale, "local_mu_scale");
        positive(halft_nu, "halft_nu");
        positive(halft_scale, "halft_scale");
        positive(mu0_precision, "mu0_precision");
        positive(nuisance_precision, "nuisance_precision");
    }
};

/// Scale (and for LocalHyper, location) of one effect slab.
struct SlabHyper {
    double tau = 1.0;    ///< piMOM scale
    double mu = 1.0;     ///< truncated-normal location, LocalHyper
    double sigma = 1.0;  ///< truncated-normal scale, LocalHyper
};

struct HyperState {
    std::array<std::array<SlabHyper, 2>, 2> slab{};  ///< [modality][sign]
    double mu0 = std::log(0.5);                      ///< mean of log dispersions
    double tau0 = 1.0;                               ///< precision of log dispersions

    SlabHyper& at(Modality m, Sign s) { return slab[slot(m)][slot(s)]; }
    [[nodiscard]] const SlabHyper& at(Modality m, Sign s) const { return slab[slot(m)][slot(s)]; }

    static HyperState initial(const PriorConfig& cfg) {
        HyperState h;
        for (auto& per_modality : h.slab) {
            for (auto& s : per_modality) s = {cfg.fixed_tau, 1.0, 1.0};
        }
        return h;
    }
};

// ---------------------------------------------------------------------------
// Model-space prior
// ---------------------------------------------------------------------------

/// Log marginal prior mass of one label vector with group counts k under
/// lambda ~ Dirichlet(kappa * a), lambda integrated out.
inline double log_model_prior(std::size_t k1, std::size_t k2, std::size_t k3,
                              const DirichletConfig& cfg) {
    cfg.validate();
    const std::array<double, 3> k{static_cast<double>(k1), static_cast<double>(k2),
                                  static_cast<double>(k3)};
    double alpha_sum = 0.0;
    double out = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double alpha = cfg.kappa * cfg.a[i];
        alpha_sum += alpha;
        out += std::lgamma(alpha + k[i]) - std::lgamma(alpha);
    }
    return out + std::lgamma(alpha_sum) - std::lgamma(alpha_sum + k[0] + k[1] + k[2]);
}

inline double log_model_prior(const GroupCounts& k, const DirichletConfig& cfg) {
    return log_model_prior(k[0], k[1], k[2], cfg);
}

/// Draw lambda | labels through the two-stick representation.
inline GroupProbabilities sample_lambda_given_labels(const GroupCounts& k, const DirichletConfig& cfg,
                                                     Rng& rng) {
    const double a1 = cfg.kappa * cfg.a[0] + static_cast<double>(k[0]);
    const double a2 = cfg.kappa * cfg.a[1] + static_cast<double>(k[1]);
    const double a3 = cfg.kappa * cfg.a[2] + static_cast<double>(k[2]);
    const double v1 = draw_beta(rng, a1, a2 + a3);
    const double v2 = draw_beta(rng, a2, a3);
    return GroupProbabilities::from_sticks(v1, v2);
}

// ---------------------------------------------------------------------------
// Continuous densities (all on the log scale)
// ---------------------------------------------------------------------------

/// Symmetric piMOM density on the real line.
inline double log_pimom(double beta, double tau, double r) {
    if (beta == 0.0 || !(tau > 0.0) || !(r > 0.0)) return kNegInf;
    const double b2 = beta * beta;
    return 0.5 * r * std::log(tau) - std::lgamma(0.5 * r) - (r + 1.0) * std::log(std::abs(beta)) - tau / b2;
}

/// piMOM truncated to one half-line.
inline double log_half_pimom(double beta, double tau, double r, Sign sign) {
    const bool inside = sign == Sign::Positive ? beta > 0.0 : beta < 0.0;
    if (!inside) return kNegInf;
    return log_pimom(beta, tau, r) + std::numbers::ln2;
}

/// If x ~ Gamma(r/2, rate tau) then 1/sqrt(x) is half-piMOM(tau, r).
inline double sample_half_pimom(Rng& rng, double tau, double r, Sign sign) {
    double x = 0.0;
    do {
        x = draw_gamma(rng, 0.5 * r, tau);
    } while (!(x > 0.0) || !std::isfinite(1.0 / std::sqrt(x)));
    const double magnitude = 1.0 / std::sqrt(x);
    return sign == Sign::Positive ? magnitude : -magnitude;
}

inline double log_normal_precision(double x, double mean, double precision) {
    const double d = x - mean;
    return 0.5 * std::log(precision) - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * precision * d * d;
}

/// Half-normal with scale sigma on the signed half-line.
inline double log_half_normal(double x, double sigma, Sign sign) {
    const bool inside = sign == Sign::Positive ? x > 0.0 : x < 0.0;
    if (!inside || !(sigma > 0.0)) return kNegInf;
    const double z = x / sigma;
    return std::numbers::ln2 - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(sigma) - 0.5 * z * z;
}

/// log Phi(z), stable in the lower tail.
inline double log_normal_cdf(double z) {
    return std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
}

/// Normal(mu, sigma) restricted to |x| > 0 on the signed half-line, with the
/// location measured in magnitude (|x| ~ N(mu, sigma) truncated to (0, inf)).
inline double log_half_truncated_normal(double x, double mu, double sigma, Sign sign) {
    const bool inside = sign == Sign::Positive ? x > 0.0 : x < 0.0;
    if (!inside || !(sigma > 0.0)) return kNegInf;
    const double z = (std::abs(x) - mu) / sigma;
    return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sigma) - 0.5 * z * z -
           log_normal_cdf(mu / sigma);
}

inline double sample_half_truncated_normal(Rng& rng, double mu, double sigma, Sign sign) {
    double x = 0.0;
    if (mu / sigma > -3.0) {
        do {
            x = draw_normal(rng, mu, sigma);
        } while (!(x > 0.0));
    } else {
        // Far-tail: exponential proposal (Robert 1995).
        const double lower = -mu / sigma;
        const double rate = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
        double z = 0.0;
        for (;;) {
            z = lower - std::log(draw_uniform(rng)) / rate;
            const double d = z - rate;
            if (std::log(draw_uniform(rng)) <= -0.5 * d * d) break;
        }
        x = mu + sigma * z;
    }
    return sign == Sign::Positive ? x : -x;
}

/// Student-t with nu degrees of freedom and scale s, folded onto [0, inf).
inline double log_half_t(double x, double nu, double scale) {
    if (x < 0.0 || !(scale > 0.0)) return kNegInf;
    const double z = x / scale;
    return std::numbers::ln2 + std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
           0.5 * std::log(nu * std::numbers::pi) - std::log(scale) -
           0.5 * (nu + 1.0) * std::log1p(z * z / nu);
}

/// Inverse gamma with shape a and scale b.
inline double log_inverse_gamma(double x, double shape, double scale) {
    if (!(x > 0.0)) return kNegInf;
    return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

// ---------------------------------------------------------------------------
// Effect prior (three-groups slab-and-spike)
// ---------------------------------------------------------------------------

/// Slab parameters actually in force for (modality, sign): fixed families
/// ignore the hyper state.
inline SlabHyper active_slab(Modality m, Sign s, const PriorConfig& cfg, const HyperState& hyper) {
    switch (cfg.family) {
        case PriorFamily::LocalFixed: return {cfg.fixed_tau, 0.0, cfg.local_scale};
        case PriorFamily::NonlocalFixed: return {cfg.fixed_tau, 0.0, cfg.local_scale};
        default: return hyper.at(m, s);
    }
}

/// Log density of a non-null effect under its slab.
inline double log_slab(double effect, Sign sign, const SlabHyper& slab, const PriorConfig& cfg) {
    switch (cfg.family) {
        case PriorFamily::LocalFixed: return log_half_normal(effect, slab.sigma, sign);
        case PriorFamily::LocalHyper: return log_half_truncated_normal(effect, slab.mu, slab.sigma, sign);
        default: return log_half_pimom(effect, slab.tau, cfg.r, sign);
    }
}

/// Spike at zero for Null, signed slab otherwise. A Null effect that is
/// exactly zero contributes nothing.
inline double log_effect_prior(double effect, GeneLabel label, Modality modality,
                               const PriorConfig& cfg, const HyperState& hyper) {
    if (is_null(label)) return effect == 0.0 ? 0.0 : kNegInf;
    const Sign s = sign_of(label);
    return log_slab(effect, s, active_slab(modality, s, cfg, hyper), cfg);
}

inline double sample_slab(Rng& rng, Sign sign, const SlabHyper& slab, const PriorConfig& cfg) {
    switch (cfg.family) {
        case PriorFamily::LocalFixed: {
            const double x = std::abs(draw_normal(rng, 0.0, slab.sigma));
            return sign == Sign::Positive ? x : -x;
        }
        case PriorFamily::LocalHyper: return sample_half_truncated_normal(rng, slab.mu, slab.sigma, sign);
        default: return sample_half_pimom(rng, slab.tau, cfg.r, sign);
    }
}

/// Draw an effect from its prior given the label (0 for Null).
inline double sample_effect_prior(Rng& rng, GeneLabel label, Modality modality, const PriorConfig& cfg,
                                  const HyperState& hyper) {
    if (is_null(label)) return 0.0;
    const Sign s = sign_of(label);
    return sample_slab(rng, s, active_slab(modality, s, cfg, hyper), cfg);
}

// ---------------------------------------------------------------------------
// Hyper-priors
// ---------------------------------------------------------------------------

/// Dispersion hierarchy: log phi_j ~ N(mu0, precision tau0), mu0 ~ N(0, 1e-2),
/// tau0 ~ half-t(nu).
inline double log_dispersion_prior(std::span<const double> log_phi, double mu0, double tau0,
                                   const PriorConfig& cfg) {
    if (!(tau0 > 0.0)) return kNegInf;
    double out = log_normal_precision(mu0, 0.0, cfg.mu0_precision) +
                 log_half_t(tau0, cfg.halft_nu, cfg.halft_scale);
    for (double lp : log_phi) out += log_normal_precision(lp, mu0, tau0);
    return out;
}

/// Hyper-prior on one slab's parameters (zero for fixed families).
inline double log_slab_hyper_prior(const SlabHyper& slab, const PriorConfig& cfg) {
    switch (cfg.family) {
        case PriorFamily::NonlocalPimomHyper:
            return log_half_pimom(slab.tau, cfg.hyper_tau, cfg.hyper_r, Sign::Positive);
        case PriorFamily::NonlocalInvGammaHyper:
            return log_inverse_gamma(slab.tau, cfg.invgamma_shape, cfg.invgamma_scale);
        case PriorFamily::LocalHyper:
            return log_inverse_gamma(slab.mu, cfg.local_mu_shape, cfg.local_mu_scale) +
                   log_half_pimom(slab.sigma, cfg.hyper_tau, cfg.hyper_r, Sign::Positive);
        default: return 0.0;
    }
}

/// Sum of all hyper-prior log densities for the active modalities. The
/// dispersion hierarchy enters only when RNA-seq is modeled.
inline double log_hyper_prior(const HyperState& hyper, const PriorConfig& cfg, ModalitySet modalities,
                              std::span<const double> log_phi) {
    double out = 0.0;
    if (modalities.rna) {
        out += log_dispersion_prior(log_phi, hyper.mu0, hyper.tau0, cfg);
    }
    for (auto m : kAllModalities) {
        if (!modalities.has(m)) continue;
        for (auto s : kAllSigns) out += log_slab_hyper_prior(hyper.at(m, s), cfg);
    }
    return out;
}

}  // namespace threegroups
