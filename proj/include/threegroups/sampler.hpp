#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <fmt/core.h>

#include "threegroups/error.hpp"
#include "threegroups/likelihoods.hpp"
#include "threegroups/model_core.hpp"
#include "threegroups/priors.hpp"
#include "threegroups/rng.hpp"

namespace threegroups {

// ---------------------------------------------------------------------------
// Configuration and data
// ---------------------------------------------------------------------------

/// Initial random-walk scales; all are adapted during burn-in.
struct ProposalScales {
    double effect = 0.3;   ///< on log|effect|
    double alpha = 0.1;
    double log_phi = 0.3;
    double beta = 0.05;
    double tau0 = 0.5;     ///< on log tau0
    double hyper = 0.5;    ///< on log tau, log mu, log sigma
};

struct ChainConfig {
    std::size_t n_iter = 20000;
    std::size_t burn_in = 10000;
    std::uint64_t seed = 1;
    std::uint64_t chain_id = 0;
    std::size_t thinning = 1;
    ProposalScales scales;
    PriorConfig prior;
    ModalitySet modalities;
    bool adapt = true;
    std::size_t checkpoint_interval = 1000;  ///< 0 disables from-scratch checks

    void validate() const {
        if (n_iter == 0) throw ValidationError("n_iter must be positive");
        if (burn_in >= n_iter) {
            throw ValidationError(fmt::format("burn_in ({}) must be smaller than n_iter ({})", burn_in, n_iter));
        }
        if (thinning == 0) throw ValidationError("thinning must be >= 1");
        for (double s : {scales.effect, scales.alpha, scales.log_phi, scales.beta, scales.tau0, scales.hyper}) {
            if (!(s > 0.0)) throw ValidationError("proposal scales must be positive");
        }
        if (!modalities.rna && !modalities.gwas) throw ValidationError("no modality selected");
        prior.validate();
    }
};

/// Datasets taking part in a fit plus their gene alignment. The datasets are
/// borrowed and must outlive the ModelData.
struct ModelData {
    const RnaSeqDataset* rna = nullptr;
    const GwasDataset* gwas = nullptr;
    GeneAlignment alignment;

    [[nodiscard]] ModalitySet modalities() const { return {rna != nullptr, gwas != nullptr}; }
    [[nodiscard]] std::size_t n_genes() const { return alignment.size(); }

    [[nodiscard]] bool present(Modality m, std::size_t u) const {
        return m == Modality::Rna ? rna != nullptr && alignment.in_rna(u)
                                  : gwas != nullptr && alignment.in_gwas(u);
    }

    /// Keep only the datasets of the selected modalities and align their genes.
    static ModelData build(const RnaSeqDataset* rna, const GwasDataset* gwas, ModalitySet modalities) {
        ModelData out;
        if (modalities.rna) {
            if (rna == nullptr) throw ValidationError("RNA-seq modality selected but no RNA-seq dataset given");
            out.rna = rna;
        }
        if (modalities.gwas) {
            if (gwas == nullptr) throw ValidationError("GWAS modality selected but no GWAS dataset given");
            out.gwas = gwas;
        }
        const std::vector<std::string> none;
        out.alignment = align_genes(out.rna ? std::span<const std::string>(out.rna->gene_ids) : none,
                                    out.gwas ? std::span<const std::string>(out.gwas->gene_ids) : none);
        return out;
    }
};

struct ChainState {
    LabelVector labels;
    GroupProbabilities lambda;
    JointParams params;
    HyperState hyper;

    [[nodiscard]] double effect(Modality m, std::size_t u) const {
        return m == Modality::Rna ? params.log_fc[u] : params.gamma[u];
    }
    double& effect(Modality m, std::size_t u) {
        return m == Modality::Rna ? params.log_fc[u] : params.gamma[u];
    }
};

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

using SparseEffects = std::vector<std::pair<std::uint32_t, double>>;

struct TraceRecord {
    std::size_t iteration = 0;
    std::vector<GeneLabel> labels;
    SparseEffects rna_effects;    ///< (union gene, log fold change) for non-null genes
    SparseEffects gwas_effects;   ///< (union gene, log odds ratio) for non-null genes
    std::vector<double> log_phi;  ///< empty unless RNA-seq is modeled
    std::array<double, 3> lambda{};
    HyperState hyper;
    double log_posterior = 0.0;
};

struct BlockAcceptance {
    std::size_t proposed = 0;
    std::size_t accepted = 0;

    void record(bool ok) {
        ++proposed;
        if (ok) ++accepted;
    }
    [[nodiscard]] double rate() const {
        return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed);
    }
};

struct Checkpoint {
    std::size_t iteration = 0;
    double incremental = 0.0;
    double recomputed = 0.0;
};

struct Trace {
    std::vector<std::string> gene_ids;
    std::vector<char> in_rna;
    std::vector<char> in_gwas;
    ModalitySet modalities;
    PriorConfig prior;
    std::size_t burn_in = 0;
    std::size_t n_iter = 0;
    std::uint64_t seed = 0;
    std::uint64_t chain_id = 0;
    std::vector<TraceRecord> records;
    std::vector<GroupCounts> occupancy;  ///< post-burn-in label tallies per gene
    std::size_t retained = 0;
    std::map<std::string, BlockAcceptance> acceptance;
    std::vector<Checkpoint> checkpoints;
    NumericDiagnostics numeric;
};

// ---------------------------------------------------------------------------
// Sampler
// ---------------------------------------------------------------------------

namespace detail {

/// Random-walk scale tuned toward a target acceptance rate in batches.
class AdaptiveScale {
public:
    AdaptiveScale() = default;
    explicit AdaptiveScale(double scale) : log_scale_(std::log(scale)) {}

    [[nodiscard]] double scale() const { return std::exp(log_scale_); }
    void record(bool accepted) {
        ++tried_;
        if (accepted) ++accepted_;
    }
    void end_batch(std::size_t batch_index, bool adapting) {
        if (adapting && tried_ > 0) {
            const double rate = static_cast<double>(accepted_) / static_cast<double>(tried_);
            const double step = std::min(0.05, 1.0 / std::sqrt(static_cast<double>(batch_index)));
            log_scale_ += rate > kTargetRate ? step : -step;
        }
        tried_ = accepted_ = 0;
    }

    static constexpr double kTargetRate = 0.44;

private:
    double log_scale_ = 0.0;
    std::size_t tried_ = 0;
    std::size_t accepted_ = 0;
};

}  // namespace detail

/// Reversible-jump MCMC over gene labels, effects, nuisance parameters and
/// hyper-parameters of the three-groups model.
///
/// Label moves use the Dirichlet-categorical prior with lambda integrated
/// out; lambda itself is drawn from its conditional after every sweep. Birth
/// moves draw effects from the current effect prior, so the slab density
/// cancels from the acceptance ratio; death moves set effects to exactly 0.
/// The incrementally maintained log-posterior is checked against a
/// from-scratch evaluation at every checkpoint.
class Sampler {
public:
    static constexpr std::size_t kAdaptBatch = 50;

    Sampler(const ModelData& data, ChainConfig cfg)
        : data_(data), cfg_(std::move(cfg)), rng_(derive_seed(cfg_.seed, cfg_.chain_id)) {
        cfg_.validate();
        if (cfg_.modalities != data_.modalities()) {
            throw ValidationError("chain modalities do not match the datasets supplied");
        }
        initialize();
    }

    [[nodiscard]] const ChainState& state() const noexcept { return state_; }
    [[nodiscard]] const ChainConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] double log_posterior() const noexcept { return log_post_; }
    [[nodiscard]] const NumericDiagnostics& numeric() const noexcept { return numeric_; }
    [[nodiscard]] const std::map<std::string, BlockAcceptance>& acceptance() const noexcept {
        return acceptance_;
    }
    Rng& rng() noexcept { return rng_; }

    /// Replace the state (tests, restarts) and rebuild every cache.
    void set_state(ChainState s) {
        state_ = std::move(s);
        rebuild_caches();
    }

    /// Log-posterior (up to a constant) evaluated from scratch.
    [[nodiscard]] double recompute_log_posterior() const {
        const auto& p = state_.params;
        const std::size_t J = data_.n_genes();
        double out = joint_loglik(data_.rna, data_.gwas, data_.alignment, p);
        out += log_model_prior(state_.labels.counts(), cfg_.prior.dirichlet);
        for (auto m : kAllModalities) {
            if (!cfg_.modalities.has(m)) continue;
            for (std::size_t u = 0; u < J; ++u) {
                out += log_effect_prior(state_.effect(m, u), state_.labels[u], m, cfg_.prior, state_.hyper);
            }
        }
        const double prec = cfg_.prior.nuisance_precision;
        if (cfg_.modalities.rna) {
            for (double a : p.alpha) out += log_normal_precision(a, 0.0, prec);
            for (double b : p.beta_rna) out += log_normal_precision(b, 0.0, prec);
        }
        if (cfg_.modalities.gwas) {
            for (double b : p.beta_gwas) out += log_normal_precision(b, 0.0, prec);
        }
        out += log_hyper_prior(state_.hyper, cfg_.prior, cfg_.modalities, p.log_phi);
        return out;
    }

    /// Log of the label-prior ratio p(labels after moving gene u to `to`) /
    /// p(labels now), from the collapsed Dirichlet-categorical prior.
    [[nodiscard]] double log_label_prior_ratio(std::size_t u, GeneLabel to) const {
        const GeneLabel from = state_.labels[u];
        if (from == to) return 0.0;
        const auto& k = state_.labels.counts();
        const auto& d = cfg_.prior.dirichlet;
        const double into = d.kappa * d.a[label_slot(to)] + static_cast<double>(k[label_slot(to)]);
        const double out_of = d.kappa * d.a[label_slot(from)] + static_cast<double>(k[label_slot(from)]) - 1.0;
        return std::log(into) - std::log(out_of);
    }

    /// Proposed label change for one gene; see propose_label_move.
    struct LabelProposal {
        std::size_t gene = 0;
        GeneLabel to = GeneLabel::Null;
        std::array<double, 2> new_effect{};  ///< [modality]
        double new_alpha = 0.0;
        double new_intercept = 0.0;
        double new_rna_ll = 0.0;
        double d_loglik = 0.0;
        double log_accept = 0.0;     ///< log MH-Green acceptance ratio
        double d_log_post = 0.0;     ///< change in the log-posterior if accepted
    };

    /// Build a label move for gene u to label `to`. Births draw effects from
    /// the prior; deaths zero them; sign swaps negate them. The RNA intercept
    /// alpha_j (and the GWAS intercept when present) is sheared so that the
    /// average linear predictor is unchanged; the shear has unit Jacobian.
    LabelProposal propose_label_move(std::size_t u, GeneLabel to) {
        const GeneLabel from = state_.labels[u];
        LabelProposal prop;
        prop.gene = u;
        prop.to = to;
        const bool birth = is_null(from) && !is_null(to);
        const bool death = !is_null(from) && is_null(to);
        double log_forward = 0.0;   // proposal density of drawn effects
        double log_reverse = 0.0;   // density of the reverse draw
        double d_prior = log_label_prior_ratio(u, to);

        const auto& p = state_.params;
        prop.new_alpha = data_.rna ? p.alpha[u] : 0.0;
        prop.new_intercept = has_gwas_intercept_ ? p.beta_gwas[0] : 0.0;

        for (auto m : kAllModalities) {
            if (!cfg_.modalities.has(m)) continue;
            const double old_e = state_.effect(m, u);
            double new_e = 0.0;
            if (birth) {
                new_e = sample_effect_prior(rng_, to, m, cfg_.prior, state_.hyper);
                const double lf = log_effect_prior(new_e, to, m, cfg_.prior, state_.hyper);
                log_forward += lf;
                d_prior += lf;
            } else if (death) {
                const double lf = log_effect_prior(old_e, from, m, cfg_.prior, state_.hyper);
                log_reverse += lf;
                d_prior -= lf;
            } else {
                new_e = -old_e;
                d_prior += log_effect_prior(new_e, to, m, cfg_.prior, state_.hyper) -
                           log_effect_prior(old_e, from, m, cfg_.prior, state_.hyper);
            }
            prop.new_effect[slot(m)] = new_e;
            if (!data_.present(m, u)) continue;

            const double d = new_e - old_e;
            if (m == Modality::Rna) {
                const auto c = static_cast<std::size_t>(data_.alignment.rna_column[u]);
                prop.new_alpha = p.alpha[u] - treated_fraction_ * d;
                prop.new_rna_ll = rna_norm_[c] + rna_kernel(c, prop.new_alpha, new_e, p.log_phi[u]);
                prop.d_loglik += prop.new_rna_ll - rna_ll_[c];
                d_prior += log_normal_precision(prop.new_alpha, 0.0, cfg_.prior.nuisance_precision) -
                           log_normal_precision(p.alpha[u], 0.0, cfg_.prior.nuisance_precision);
            } else {
                const auto c = static_cast<std::size_t>(data_.alignment.gwas_column[u]);
                const double shift = has_gwas_intercept_ ? -carrier_fraction_[c] * d : 0.0;
                prop.d_loglik += classes_.delta(carriers_[c], carrier_cases_[c], d, shift);
                if (has_gwas_intercept_) {
                    prop.new_intercept = p.beta_gwas[0] + shift;
                    d_prior += log_normal_precision(prop.new_intercept, 0.0, cfg_.prior.nuisance_precision) -
                               log_normal_precision(p.beta_gwas[0], 0.0, cfg_.prior.nuisance_precision);
                }
            }
        }
        prop.d_log_post = prop.d_loglik + d_prior;
        prop.log_accept = prop.d_log_post - log_forward + log_reverse;
        return prop;
    }

    void apply_label_move(const LabelProposal& prop) {
        const std::size_t u = prop.gene;
        auto& p = state_.params;
        for (auto m : kAllModalities) {
            if (!cfg_.modalities.has(m)) continue;
            const double old_e = state_.effect(m, u);
            const double new_e = prop.new_effect[slot(m)];
            if (data_.present(m, u)) {
                const double d = new_e - old_e;
                if (m == Modality::Rna) {
                    const auto c = static_cast<std::size_t>(data_.alignment.rna_column[u]);
                    p.alpha[u] = prop.new_alpha;
                    rna_ll_[c] = prop.new_rna_ll;
                } else {
                    const auto c = static_cast<std::size_t>(data_.alignment.gwas_column[u]);
                    if (has_gwas_intercept_) {
                        const double shift = prop.new_intercept - p.beta_gwas[0];
                        p.beta_gwas[0] = prop.new_intercept;
                        for (auto& e : eta_) e += shift;
                    }
                    for (auto i : carriers_[c]) eta_[i] += d;
                    classes_.rebuild(eta_, data_.gwas->outcome);
                }
            }
            state_.effect(m, u) = new_e;
        }
        state_.labels.set(u, prop.to);
        log_post_ += prop.d_log_post;
    }

    /// One reversible-jump label update for gene u: the new label is chosen
    /// uniformly from the two labels the gene does not hold.
    bool rj_label_move(std::size_t u) {
        const GeneLabel from = state_.labels[u];
        const bool pick_first = draw_uniform(rng_) < 0.5;
        GeneLabel to = GeneLabel::Null;
        switch (from) {
            case GeneLabel::Null: to = pick_first ? GeneLabel::Deleterious : GeneLabel::Beneficial; break;
            case GeneLabel::Deleterious: to = pick_first ? GeneLabel::Null : GeneLabel::Beneficial; break;
            case GeneLabel::Beneficial: to = pick_first ? GeneLabel::Null : GeneLabel::Deleterious; break;
        }
        const auto prop = propose_label_move(u, to);
        const bool ok = accept_log(rng_, prop.log_accept);
        const char* kind = is_null(from) ? "rj_birth" : (is_null(to) ? "rj_death" : "rj_swap");
        acceptance_[kind].record(ok);
        if (ok) apply_label_move(prop);
        return ok;
    }

    /// Random-walk update of log|effect| for every non-null gene present in a
    /// modality; the sign is preserved.
    void update_effects() {
        for (std::size_t u = 0; u < data_.n_genes(); ++u) {
            const GeneLabel g = state_.labels[u];
            if (is_null(g)) continue;
            for (auto m : kAllModalities) {
                if (!data_.present(m, u)) continue;
                auto& scale = effect_scale_[slot(m)][u];
                const double e = state_.effect(m, u);
                const double v = std::log(std::abs(e));
                const double v_new = v + draw_normal(rng_, 0.0, scale.scale());
                const double e_new = std::copysign(std::exp(v_new), e);
                const double d_prior = log_effect_prior(e_new, g, m, cfg_.prior, state_.hyper) -
                                       log_effect_prior(e, g, m, cfg_.prior, state_.hyper);
                double d_ll = 0.0;
                double new_rna_ll = 0.0;
                std::size_t c = 0;
                if (m == Modality::Rna) {
                    c = static_cast<std::size_t>(data_.alignment.rna_column[u]);
                    new_rna_ll = rna_norm_[c] + rna_kernel(c, state_.params.alpha[u], e_new, state_.params.log_phi[u]);
                    d_ll = new_rna_ll - rna_ll_[c];
                } else {
                    c = static_cast<std::size_t>(data_.alignment.gwas_column[u]);
                    d_ll = classes_.delta(carriers_[c], carrier_cases_[c], e_new - e, 0.0);
                }
                const bool ok = accept_log(rng_, d_ll + d_prior + (v_new - v));
                scale.record(ok);
                acceptance_["effect"].record(ok);
                if (!ok) continue;
                if (m == Modality::Rna) {
                    rna_ll_[c] = new_rna_ll;
                } else {
                    for (auto i : carriers_[c]) eta_[i] += e_new - e;
                    classes_.rebuild(eta_, data_.gwas->outcome);
                }
                state_.effect(m, u) = e_new;
                log_post_ += d_ll + d_prior;
            }
        }
    }

    /// Refresh the parameters of a gene absent from `m` from their priors
    /// given the current label. They carry no likelihood in that modality.
    void impute_missing_gene(std::size_t u, Modality m) {
        if (!cfg_.modalities.has(m) || data_.present(m, u)) return;
        const GeneLabel g = state_.labels[u];
        auto& e = state_.effect(m, u);
        const double e_new = sample_effect_prior(rng_, g, m, cfg_.prior, state_.hyper);
        log_post_ += log_effect_prior(e_new, g, m, cfg_.prior, state_.hyper) -
                     log_effect_prior(e, g, m, cfg_.prior, state_.hyper);
        e = e_new;
        if (m == Modality::Rna) {
            auto& p = state_.params;
            const double prec = cfg_.prior.nuisance_precision;
            const double a_new = draw_normal(rng_, 0.0, 1.0 / std::sqrt(prec));
            log_post_ += log_normal_precision(a_new, 0.0, prec) - log_normal_precision(p.alpha[u], 0.0, prec);
            p.alpha[u] = a_new;
            const double lp_new = draw_normal(rng_, state_.hyper.mu0, 1.0 / std::sqrt(state_.hyper.tau0));
            log_post_ += log_normal_precision(lp_new, state_.hyper.mu0, state_.hyper.tau0) -
                         log_normal_precision(p.log_phi[u], state_.hyper.mu0, state_.hyper.tau0);
            p.log_phi[u] = lp_new;
        }
    }

    void impute_missing_genes() {
        for (std::size_t u = 0; u < data_.n_genes(); ++u) {
            for (auto m : kAllModalities) impute_missing_gene(u, m);
        }
    }

    /// Gibbs draw of mu0 given the log dispersions and tau0.
    void update_mu0() {
        const auto& lphi = state_.params.log_phi;
        const double tau0 = state_.hyper.tau0;
        const double post_prec = cfg_.prior.mu0_precision + static_cast<double>(lphi.size()) * tau0;
        double sum = 0.0;
        for (double v : lphi) sum += v;
        const double post_mean = tau0 * sum / post_prec;
        const double old_mu0 = state_.hyper.mu0;
        const double new_mu0 = draw_normal(rng_, post_mean, 1.0 / std::sqrt(post_prec));
        log_post_ += log_dispersion_prior(lphi, new_mu0, tau0, cfg_.prior) -
                     log_dispersion_prior(lphi, old_mu0, tau0, cfg_.prior);
        state_.hyper.mu0 = new_mu0;
    }

    /// Full conditional mean of mu0; exposed for checking the conjugate update.
    [[nodiscard]] static double mu0_conditional_mean(std::span<const double> log_phi, double tau0,
                                                     double prior_precision) {
        double sum = 0.0;
        for (double v : log_phi) sum += v;
        return tau0 * sum / (prior_precision + static_cast<double>(log_phi.size()) * tau0);
    }

    void update_nuisance() {
        if (data_.rna != nullptr) update_rna_nuisance();
        if (data_.gwas != nullptr) update_gwas_coefficients();
        if (has_effect_hyper(cfg_.prior.family)) update_slab_hypers();
    }

    void update_lambda() {
        state_.lambda = sample_lambda_given_labels(state_.labels.counts(), cfg_.prior.dirichlet, rng_);
    }

    /// One full sweep: imputation, label moves, effects, nuisance, lambda.
    void sweep() {
        impute_missing_genes();
        for (std::size_t u = 0; u < data_.n_genes(); ++u) rj_label_move(u);
        update_effects();
        update_nuisance();
        update_lambda();
    }

    /// Close an adaptation batch; scales only move while `adapting`.
    void end_adapt_batch(bool adapting) {
        ++batch_index_;
        for (auto& per_modality : effect_scale_) {
            for (auto& s : per_modality) s.end_batch(batch_index_, adapting);
        }
        for (auto* v : {&alpha_scale_, &phi_scale_, &beta_rna_scale_, &beta_gwas_scale_}) {
            for (auto& s : *v) s.end_batch(batch_index_, adapting);
        }
        tau0_scale_.end_batch(batch_index_, adapting);
        for (auto& per_modality : hyper_scale_) {
            for (auto& per_sign : per_modality) {
                for (auto& s : per_sign) s.end_batch(batch_index_, adapting);
            }
        }
    }

    /// Compare the incremental log-posterior with a from-scratch value, then
    /// resynchronize all caches.
    Checkpoint checkpoint(std::size_t iteration) {
        Checkpoint cp{iteration, log_post_, recompute_log_posterior()};
        rebuild_caches();
        return cp;
    }

    Trace run() {
        Trace trace;
        trace.gene_ids = data_.alignment.union_ids;
        for (std::size_t u = 0; u < data_.n_genes(); ++u) {
            trace.in_rna.push_back(data_.present(Modality::Rna, u) ? 1 : 0);
            trace.in_gwas.push_back(data_.present(Modality::Gwas, u) ? 1 : 0);
        }
        trace.modalities = cfg_.modalities;
        trace.prior = cfg_.prior;
        trace.burn_in = cfg_.burn_in;
        trace.n_iter = cfg_.n_iter;
        trace.seed = cfg_.seed;
        trace.chain_id = cfg_.chain_id;
        trace.occupancy.assign(data_.n_genes(), GroupCounts{0, 0, 0});
        trace.records.reserve(cfg_.n_iter / cfg_.thinning + 1);

        for (std::size_t t = 0; t < cfg_.n_iter; ++t) {
            sweep();
            const bool adapting = cfg_.adapt && t < cfg_.burn_in;
            if ((t + 1) % kAdaptBatch == 0) end_adapt_batch(adapting);
            if (cfg_.checkpoint_interval > 0 && (t + 1) % cfg_.checkpoint_interval == 0) {
                trace.checkpoints.push_back(checkpoint(t + 1));
            }
            if (t % cfg_.thinning != 0) continue;
            trace.records.push_back(snapshot(t));
            if (t >= cfg_.burn_in) {
                ++trace.retained;
                for (std::size_t u = 0; u < data_.n_genes(); ++u) {
                    ++trace.occupancy[u][label_slot(state_.labels[u])];
                }
            }
        }
        trace.acceptance = acceptance_;
        trace.numeric = numeric_;
        return trace;
    }

    [[nodiscard]] TraceRecord snapshot(std::size_t iteration) const {
        TraceRecord rec;
        rec.iteration = iteration;
        rec.labels.assign(state_.labels.labels().begin(), state_.labels.labels().end());
        for (std::size_t u = 0; u < data_.n_genes(); ++u) {
            if (is_null(state_.labels[u])) continue;
            if (cfg_.modalities.rna) rec.rna_effects.emplace_back(static_cast<std::uint32_t>(u), state_.params.log_fc[u]);
            if (cfg_.modalities.gwas) rec.gwas_effects.emplace_back(static_cast<std::uint32_t>(u), state_.params.gamma[u]);
        }
        if (cfg_.modalities.rna) rec.log_phi = state_.params.log_phi;
        rec.lambda = state_.lambda.lambda;
        rec.hyper = state_.hyper;
        rec.log_posterior = log_post_;
        return rec;
    }

private:
    void initialize() {
        const std::size_t J = data_.n_genes();
        state_.labels = LabelVector(J);
        state_.lambda = GroupProbabilities{};
        state_.hyper = HyperState::initial(cfg_.prior);
        auto& p = state_.params;
        p.gamma.assign(J, 0.0);
        p.log_fc.assign(J, 0.0);
        p.alpha.assign(J, 0.0);
        p.log_phi.assign(J, std::log(0.5));
        if (data_.rna != nullptr) {
            const auto& ds = *data_.rna;
            p.beta_rna.assign(ds.n_covariates(), 0.0);
            const double n = static_cast<double>(ds.n_samples());
            double mean_offset = 0.0;
            for (double l : ds.log_library_size) mean_offset += l;
            if (n > 0) mean_offset /= n;
            for (std::size_t c = 0; c < ds.n_genes(); ++c) {
                if (ds.n_samples() == 0) break;
                double mean_count = 0.0;
                for (std::size_t i = 0; i < ds.n_samples(); ++i) mean_count += static_cast<double>(ds.counts(i, c));
                mean_count = std::max(mean_count / n, 0.5 / n);
                p.alpha[data_.alignment.rna_to_union[c]] = std::log(mean_count) - mean_offset - ds.log_gene_length[c];
            }
        }
        if (data_.gwas != nullptr) p.beta_gwas.assign(data_.gwas->n_covariates(), 0.0);

        const auto& sc = cfg_.scales;
        for (auto& v : effect_scale_) v.assign(J, detail::AdaptiveScale(sc.effect));
        const std::size_t J_rna = data_.rna ? data_.rna->n_genes() : 0;
        alpha_scale_.assign(J_rna, detail::AdaptiveScale(sc.alpha));
        phi_scale_.assign(J_rna, detail::AdaptiveScale(sc.log_phi));
        beta_rna_scale_.assign(p.beta_rna.size(), detail::AdaptiveScale(sc.beta));
        beta_gwas_scale_.assign(p.beta_gwas.size(), detail::AdaptiveScale(sc.beta));
        tau0_scale_ = detail::AdaptiveScale(sc.tau0);
        for (auto& per_modality : hyper_scale_) {
            for (auto& per_sign : per_modality) per_sign.fill(detail::AdaptiveScale(sc.hyper));
        }

        if (data_.rna != nullptr) {
            const auto& ds = *data_.rna;
            std::size_t treated = 0;
            for (int k : ds.treatment) treated += k == 1 ? 1 : 0;
            rna_lgamma_y1_.assign(ds.n_genes(), 0.0);
            for (std::size_t c = 0; c < ds.n_genes(); ++c) {
                for (std::size_t i = 0; i < ds.n_samples(); ++i) {
                    rna_lgamma_y1_[c] += std::lgamma(static_cast<double>(ds.counts(i, c)) + 1.0);
                }
            }
            treated_fraction_ = ds.n_samples() > 0 ? static_cast<double>(treated) / static_cast<double>(ds.n_samples()) : 0.0;
        }
        if (data_.gwas != nullptr) {
            carriers_ = carrier_lists(*data_.gwas);
            has_gwas_intercept_ = data_.gwas->has_intercept() && data_.gwas->n_individuals() > 0;
            const double n = static_cast<double>(data_.gwas->n_individuals());
            carrier_fraction_.assign(carriers_.size(), 0.0);
            carrier_cases_.assign(carriers_.size(), 0.0);
            for (std::size_t c = 0; c < carriers_.size(); ++c) {
                carrier_fraction_[c] = n > 0 ? static_cast<double>(carriers_[c].size()) / n : 0.0;
                for (auto i : carriers_[c]) carrier_cases_[c] += static_cast<double>(data_.gwas->outcome[i]);
            }
        }

        rebuild_caches();
        if (!std::isfinite(log_post_)) {
            throw RuntimeAbort(fmt::format(
                "initial log-posterior is not finite ({}): check for zero-variance inputs, extreme offsets "
                "or covariates, and that all prior parameters are positive",
                log_post_));
        }
    }

    void rebuild_caches() {
        const auto& p = state_.params;
        if (data_.rna != nullptr) {
            const auto& ds = *data_.rna;
            rna_base_ = covariate_dots(ds.covariates, p.beta_rna);
            for (std::size_t i = 0; i < ds.n_samples(); ++i) rna_base_[i] += ds.log_library_size[i];
            rna_norm_.assign(ds.n_genes(), 0.0);
            rna_ll_.assign(ds.n_genes(), 0.0);
            for (std::size_t c = 0; c < ds.n_genes(); ++c) {
                const std::size_t u = data_.alignment.rna_to_union[c];
                rna_norm_[c] = rna_normalizer(c, p.log_phi[u]);
                rna_ll_[c] = rna_norm_[c] + rna_kernel(c, p.alpha[u], p.log_fc[u], p.log_phi[u]);
            }
        }
        if (data_.gwas != nullptr) {
            eta_ = logistic_linear_predictor(*data_.gwas, gwas_params(p, data_.alignment));
            classes_.rebuild(eta_, data_.gwas->outcome);
        }
        log_post_ = recompute_log_posterior();
    }

    [[nodiscard]] double rna_normalizer(std::size_t c, double log_phi) const {
        const auto& ds = *data_.rna;
        const double size = std::exp(-log_phi);
        double out = 0.0;
        for (std::size_t i = 0; i < ds.n_samples(); ++i) out += std::lgamma(static_cast<double>(ds.counts(i, c)) + size);
        return out - static_cast<double>(ds.n_samples()) * std::lgamma(size) - rna_lgamma_y1_[c];
    }

    [[nodiscard]] double rna_kernel(std::size_t c, double alpha, double log_fc, double log_phi) const {
        const auto& ds = *data_.rna;
        const double gene_offset = alpha + ds.log_gene_length[c];
        double out = 0.0;
        for (std::size_t i = 0; i < ds.n_samples(); ++i) {
            double eta = gene_offset + rna_base_[i] + (ds.treatment[i] == 1 ? log_fc : 0.0);
            if (eta > kMaxExponent || eta < -kMaxExponent) {
                ++numeric_.clamped_exponents;
                eta = std::clamp(eta, -kMaxExponent, kMaxExponent);
            }
            out += nb_log_kernel(ds.counts(i, c), eta, log_phi);
        }
        return out;
    }

    void update_rna_nuisance() {
        const auto& ds = *data_.rna;
        auto& p = state_.params;
        const double prec = cfg_.prior.nuisance_precision;
        for (std::size_t c = 0; c < ds.n_genes(); ++c) {
            const std::size_t u = data_.alignment.rna_to_union[c];
            // intercept
            {
                const double a_new = p.alpha[u] + draw_normal(rng_, 0.0, alpha_scale_[c].scale());
                const double ll_new = rna_norm_[c] + rna_kernel(c, a_new, p.log_fc[u], p.log_phi[u]);
                const double d = ll_new - rna_ll_[c] + log_normal_precision(a_new, 0.0, prec) -
                                 log_normal_precision(p.alpha[u], 0.0, prec);
                const bool ok = accept_log(rng_, d);
                alpha_scale_[c].record(ok);
                acceptance_["alpha"].record(ok);
                if (ok) {
                    p.alpha[u] = a_new;
                    rna_ll_[c] = ll_new;
                    log_post_ += d;
                }
            }
            // dispersion
            {
                const double lp_new = p.log_phi[u] + draw_normal(rng_, 0.0, phi_scale_[c].scale());
                const double norm_new = rna_normalizer(c, lp_new);
                const double ll_new = norm_new + rna_kernel(c, p.alpha[u], p.log_fc[u], lp_new);
                const double d = ll_new - rna_ll_[c] +
                                 log_normal_precision(lp_new, state_.hyper.mu0, state_.hyper.tau0) -
                                 log_normal_precision(p.log_phi[u], state_.hyper.mu0, state_.hyper.tau0);
                const bool ok = accept_log(rng_, d);
                phi_scale_[c].record(ok);
                acceptance_["log_phi"].record(ok);
                if (ok) {
                    p.log_phi[u] = lp_new;
                    rna_norm_[c] = norm_new;
                    rna_ll_[c] = ll_new;
                    log_post_ += d;
                }
            }
        }
        // covariate coefficients
        for (std::size_t l = 0; l < p.beta_rna.size(); ++l) {
            const double step = draw_normal(rng_, 0.0, beta_rna_scale_[l].scale());
            const auto base_old = rna_base_;
            for (std::size_t i = 0; i < ds.n_samples(); ++i) rna_base_[i] += step * ds.covariates(i, l);
            std::vector<double> ll_new(ds.n_genes());
            double d = log_normal_precision(p.beta_rna[l] + step, 0.0, prec) -
                       log_normal_precision(p.beta_rna[l], 0.0, prec);
            for (std::size_t c = 0; c < ds.n_genes(); ++c) {
                const std::size_t u = data_.alignment.rna_to_union[c];
                ll_new[c] = rna_norm_[c] + rna_kernel(c, p.alpha[u], p.log_fc[u], p.log_phi[u]);
                d += ll_new[c] - rna_ll_[c];
            }
            const bool ok = accept_log(rng_, d);
            beta_rna_scale_[l].record(ok);
            acceptance_["beta_rna"].record(ok);
            if (ok) {
                p.beta_rna[l] += step;
                rna_ll_ = std::move(ll_new);
                log_post_ += d;
            } else {
                rna_base_ = base_old;
            }
        }
        update_mu0();
        // tau0 on the log scale
        {
            const double t_old = state_.hyper.tau0;
            const double t_new = t_old * std::exp(draw_normal(rng_, 0.0, tau0_scale_.scale()));
            const double d = log_dispersion_prior(p.log_phi, state_.hyper.mu0, t_new, cfg_.prior) -
                             log_dispersion_prior(p.log_phi, state_.hyper.mu0, t_old, cfg_.prior);
            const bool ok = accept_log(rng_, d + std::log(t_new) - std::log(t_old));
            tau0_scale_.record(ok);
            acceptance_["tau0"].record(ok);
            if (ok) {
                state_.hyper.tau0 = t_new;
                log_post_ += d;
            }
        }
    }

    void update_gwas_coefficients() {
        const auto& ds = *data_.gwas;
        auto& p = state_.params;
        const double prec = cfg_.prior.nuisance_precision;
        for (std::size_t l = 0; l < p.beta_gwas.size(); ++l) {
            const double step = draw_normal(rng_, 0.0, beta_gwas_scale_[l].scale());
            double d_ll = 0.0;
            if (l == 0 && has_gwas_intercept_) {
                d_ll = classes_.delta({}, 0.0, 0.0, step);
            } else {
                for (std::size_t i = 0; i < ds.n_individuals(); ++i) {
                    const double x = ds.covariates(i, l);
                    if (x == 0.0) continue;
                    d_ll += logistic_term(ds.outcome[i], eta_[i] + step * x) - logistic_term(ds.outcome[i], eta_[i]);
                }
            }
            const double d = d_ll + log_normal_precision(p.beta_gwas[l] + step, 0.0, prec) -
                             log_normal_precision(p.beta_gwas[l], 0.0, prec);
            const bool ok = accept_log(rng_, d);
            beta_gwas_scale_[l].record(ok);
            acceptance_["beta_gwas"].record(ok);
            if (!ok) continue;
            p.beta_gwas[l] += step;
            for (std::size_t i = 0; i < ds.n_individuals(); ++i) eta_[i] += step * ds.covariates(i, l);
            classes_.rebuild(eta_, ds.outcome);
            log_post_ += d;
        }
    }

    /// Sum of slab log densities over genes holding `sign` in modality m,
    /// under slab parameters `slab`.
    [[nodiscard]] double slab_loglik(Modality m, Sign sign, const SlabHyper& slab) const {
        double out = 0.0;
        for (std::size_t u = 0; u < data_.n_genes(); ++u) {
            const GeneLabel g = state_.labels[u];
            if (is_null(g) || sign_of(g) != sign) continue;
            out += log_slab(state_.effect(m, u), sign, slab, cfg_.prior);
        }
        return out;
    }

    void update_slab_hypers() {
        for (auto m : kAllModalities) {
            if (!cfg_.modalities.has(m)) continue;
            for (auto s : kAllSigns) {
                auto& scales = hyper_scale_[slot(m)][slot(s)];
                if (cfg_.prior.family == PriorFamily::LocalHyper) {
                    update_slab_component(m, s, &SlabHyper::mu, scales[1]);
                    update_slab_component(m, s, &SlabHyper::sigma, scales[2]);
                } else {
                    update_slab_component(m, s, &SlabHyper::tau, scales[0]);
                }
            }
        }
    }

    void update_slab_component(Modality m, Sign s, double SlabHyper::*field, detail::AdaptiveScale& scale) {
        SlabHyper& cur = state_.hyper.at(m, s);
        SlabHyper next = cur;
        next.*field = cur.*field * std::exp(draw_normal(rng_, 0.0, scale.scale()));
        const double d = slab_loglik(m, s, next) + log_slab_hyper_prior(next, cfg_.prior) -
                         slab_loglik(m, s, cur) - log_slab_hyper_prior(cur, cfg_.prior);
        const bool ok = accept_log(rng_, d + std::log(next.*field) - std::log(cur.*field));
        scale.record(ok);
        acceptance_["hyper"].record(ok);
        if (ok) {
            cur = next;
            log_post_ += d;
        }
    }

    const ModelData& data_;
    ChainConfig cfg_;
    Rng rng_;
    ChainState state_;
    double log_post_ = 0.0;

    // likelihood caches
    std::vector<double> rna_base_;   ///< L_i + x_i' beta_rna
    std::vector<double> rna_norm_;   ///< per RNA column, mean-free part of the NB log pmf
    std::vector<double> rna_ll_;     ///< per RNA column log-likelihood
    std::vector<double> rna_lgamma_y1_;  ///< per RNA column sum of lgamma(y + 1)
    double treated_fraction_ = 0.0;
    std::vector<double> eta_;        ///< GWAS linear predictors
    LogisticClasses classes_;
    std::vector<double> carrier_cases_;
    std::vector<std::vector<std::uint32_t>> carriers_;
    std::vector<double> carrier_fraction_;
    bool has_gwas_intercept_ = false;

    // proposal tuning
    std::array<std::vector<detail::AdaptiveScale>, 2> effect_scale_;
    std::vector<detail::AdaptiveScale> alpha_scale_;
    std::vector<detail::AdaptiveScale> phi_scale_;
    std::vector<detail::AdaptiveScale> beta_rna_scale_;
    std::vector<detail::AdaptiveScale> beta_gwas_scale_;
    detail::AdaptiveScale tau0_scale_;
    std::array<std::array<std::array<detail::AdaptiveScale, 3>, 2>, 2> hyper_scale_;  ///< [m][s][tau,mu,sigma]
    std::size_t batch_index_ = 0;

    std::map<std::string, BlockAcceptance> acceptance_;
    mutable NumericDiagnostics numeric_;
};

inline Trace run_chain(const ModelData& data, const ChainConfig& cfg) {
    Sampler sampler(data, cfg);
    return sampler.run();
}

/// Run chains 0..n_chains-1 with streams derived from (seed, chain id) on a
/// pool of `workers` threads. Results are ordered by chain id.
inline std::vector<Trace> run_chains(const ModelData& data, const ChainConfig& cfg, std::size_t n_chains,
                                     std::size_t workers) {
    std::vector<Trace> out(n_chains);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (std::size_t k = next++; k < n_chains; k = next++) {
            try {
                ChainConfig c = cfg;
                c.chain_id = k;
                out[k] = run_chain(data, c);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n_chains, 1));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

}  // namespace threegroups
