// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <fmt/core.h>

#include "commands.hpp"
#include "oracles.hpp"
#include "threegroups/threegroups.hpp"

namespace fs = std::filesystem;
using namespace threegroups;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double mean_of(std::span<const double> x) {
    return x.empty() ? 0.0 : std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// --- 1 ---------------------------------------------------------------------

Outcome prior_pmf_sums_to_one() {
    const std::vector<DirichletConfig> configs{{1.0, {1.0, 1.0, 1.0}}, {2.5, {0.5, 1.0, 2.0}}, {0.3, {4.0, 0.2, 1.0}}};
    double worst = 0.0;
    for (const auto& cfg : configs) {
        for (std::size_t J = 1; J <= 6; ++J) {
            std::size_t n_models = 1;
            for (std::size_t j = 0; j < J; ++j) n_models *= 3;
            double total = 0.0;
            for (std::size_t code = 0; code < n_models; ++code) {
                std::size_t k[3] = {0, 0, 0};
                for (std::size_t c = code, j = 0; j < J; ++j, c /= 3) ++k[c % 3];
                total += std::exp(log_model_prior(k[0], k[1], k[2], cfg));
            }
            worst = std::max(worst, std::abs(total - 1.0));
        }
    }
    return {worst < 1e-10, fmt::format("max |sum - 1| = {:.2e} over J=1..6, 3 Dirichlet settings", worst)};
}

// --- 2 ---------------------------------------------------------------------

Outcome multiplicity_penalty() {
    const DirichletConfig cfg{1.0, {1.0, 1.0, 1.0}};
    const double gap = log_model_prior(1000, 0, 0, cfg) - log_model_prior(950, 25, 25, cfg);
    // independent closed form: log p(k) = log G(3) - log G(3+J) + sum log G(1+k_i)
    auto closed = [](double k1, double k2, double k3) {
        return std::lgamma(3.0) - std::lgamma(3.0 + k1 + k2 + k3) + std::lgamma(1.0 + k1) + std::lgamma(1.0 + k2) +
               std::lgamma(1.0 + k3);
    };
    const double gap_oracle = closed(1000, 0, 0) - closed(950, 25, 25);
    const bool ok = gap > std::log(1e3) && std::abs(gap - gap_oracle) < 1e-8;
    return {ok, fmt::format("log p(k=0) - log p(k2=k3=25) = {:.3f} (oracle {:.3f}, threshold {:.3f})", gap, gap_oracle,
                            std::log(1e3))};
}

// --- 3 ---------------------------------------------------------------------

Outcome densities_normalize() {
    boost::math::quadrature::exp_sinh<double> half_line;
    auto positive = [&](const std::function<double(double)>& log_density) {
        return half_line.integrate([&](double x) { return std::exp(log_density(x)); }, 0.0,
                                   std::numeric_limits<double>::infinity());
    };
    auto negative = [&](const std::function<double(double)>& log_density) {
        return half_line.integrate([&](double x) { return std::exp(log_density(-x)); }, 0.0,
                                   std::numeric_limits<double>::infinity());
    };
    std::vector<std::pair<std::string, double>> masses{
        {"piMOM(1,2)", positive([](double x) { return log_pimom(x, 1.0, 2.0); }) +
                           negative([](double x) { return log_pimom(x, 1.0, 2.0); })},
        {"half-piMOM+", positive([](double x) { return log_half_pimom(x, 1.0, 2.0, Sign::Positive); })},
        {"half-piMOM-", negative([](double x) { return log_half_pimom(x, 1.0, 2.0, Sign::Negative); })},
        {"half-normal+", positive([](double x) { return log_half_normal(x, 1.3, Sign::Positive); })},
        {"half-normal-", negative([](double x) { return log_half_normal(x, 1.3, Sign::Negative); })},
        {"half-t(4)", positive([](double x) { return log_half_t(x, 4.0, 1.0); })},
    };
    double worst = 0.0;
    std::string listing;
    for (const auto& [name, mass] : masses) {
        worst = std::max(worst, std::abs(mass - 1.0));
        listing += fmt::format(" {}={:.9f}", name, mass);
    }
    return {worst < 1e-6, fmt::format("max |mass - 1| = {:.2e};{}", worst, listing)};
}

// --- 4 ---------------------------------------------------------------------

Outcome negative_binomial() {
    double worst_sum = 0.0;
    double worst_z = 0.0;
    Rng rng(derive_seed(4, 0));
    constexpr std::size_t kDraws = 1000000;
    for (double mu : {1.0, 5.0, 50.0}) {
        for (double phi : {0.1, 0.5, 2.0}) {
            double total = 0.0;
            double tail = 1.0;
            for (std::int64_t y = 0; tail > 1e-16 || static_cast<double>(y) < mu; ++y) {
                tail = std::exp(nb_log_pmf(y, mu, phi));
                total += tail;
                if (y > 10000000) break;
            }
            worst_sum = std::max(worst_sum, std::abs(total - 1.0));

            std::vector<double> x(kDraws);
            for (auto& v : x) v = static_cast<double>(draw_negative_binomial(rng, mu, phi));
            const double m = mean_of(x);
            double m2 = 0.0, m4 = 0.0;
            for (double v : x) {
                const double d = (v - m) * (v - m);
                m2 += d;
                m4 += d * d;
            }
            m2 /= static_cast<double>(kDraws - 1);
            m4 /= static_cast<double>(kDraws);
            const double se = std::sqrt((m4 - m2 * m2) / static_cast<double>(kDraws));
            worst_z = std::max(worst_z, std::abs(m2 - mu * (1.0 + mu * phi)) / se);
        }
    }
    return {worst_sum < 1e-8 && worst_z < 3.0,
            fmt::format("max |pmf sum - 1| = {:.2e}; max |var - mu(1+mu phi)| = {:.2f} s.e. at n=1e6", worst_sum,
                        worst_z)};
}

// --- 5 ---------------------------------------------------------------------

GwasDataset empty_gwas(std::size_t J) {
    GwasDataset g;
    g.carrier = Matrix<int>(0, J);
    g.covariates = Matrix<double>(0, 1);
    for (std::size_t j = 0; j < J; ++j) g.gene_ids.push_back(sim_gene_id(j));
    return g;
}

Outcome prior_recovery() {
    constexpr std::size_t J = 20;
    constexpr std::size_t kIter = 20000;
    constexpr std::size_t kThin = 20;
    const auto start = std::chrono::steady_clock::now();
    const GwasDataset g = empty_gwas(J);
    const ModalitySet gwas_only{false, true};
    const auto data = ModelData::build(nullptr, &g, gwas_only);

    std::vector<Trace> traces;
    for (std::uint64_t seed : {101, 202, 303}) {
        ChainConfig cfg;
        cfg.n_iter = kIter;
        cfg.burn_in = 0;
        cfg.seed = seed;
        cfg.modalities = gwas_only;
        traces.push_back(run_chain(data, cfg));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    // pooled over seeds: |mean - 1/3| <= 3 s.e. for every gene and label
    double worst_z = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
        for (auto label : kAllLabels) {
            double m = 0.0, var = 0.0;
            for (const auto& t : traces) {
                const auto s = occupancy_series(t, j, label, 0);
                m += mean_of(s);
                const double se = batch_means_se(s);
                var += se * se;
            }
            m /= 3.0;
            const double se = std::sqrt(var) / 3.0;
            worst_z = std::max(worst_z, std::abs(m - 1.0 / 3.0) / se);
        }
    }

    // per seed: chi-square on thinned per-gene label counts, Bonferroni over genes
    std::vector<double> seed_p;
    for (const auto& t : traces) {
        double min_p = 1.0;
        for (std::size_t j = 0; j < J; ++j) {
            std::vector<double> counts(3, 0.0);
            for (std::size_t r = kThin - 1; r < t.records.size(); r += kThin) {
                counts[static_cast<std::size_t>(t.records[r].labels[j]) - 1] += 1.0;
            }
            const double n = counts[0] + counts[1] + counts[2];
            min_p = std::min(min_p, oracle::chi_square_pvalue(counts, {n / 3.0, n / 3.0, n / 3.0}));
        }
        seed_p.push_back(std::min(1.0, min_p * static_cast<double>(J)));
    }
    const bool chi_ok = std::all_of(seed_p.begin(), seed_p.end(), [](double p) { return p > 1e-3; });
    const bool ok = worst_z <= 3.0 && chi_ok && secs < 120.0;
    return {ok, fmt::format("max |P - 1/3| = {:.2f} MC s.e.; Bonferroni-adjusted per-gene chi-square p per seed = {:.3f}, {:.3f}, {:.3f}; {:.1f}s",
                            worst_z, seed_p[0], seed_p[1], seed_p[2], secs)};
}

// --- 6 ---------------------------------------------------------------------

Outcome signal_recovery() {
    SimConfig sim;
    sim.n_genes = 50;
    sim.n_ben = 2;
    sim.n_del = 2;
    sim.gwas_effects = {1.5};
    sim.rna_log2_fc = {1.5};
    sim.seed = 606;
    const auto start = std::chrono::steady_clock::now();
    std::size_t good = 0;
    std::string listing;
    for (std::size_t r = 0; r < 10; ++r) {
        const Replicate rep = gen_replicate(sim, r);
        const ModalitySet joint{true, true};
        const auto data = ModelData::build(&rep.rna, &rep.gwas, joint);
        ChainConfig cfg;
        cfg.n_iter = 20000;
        cfg.burn_in = 10000;
        cfg.seed = derive_seed(sim.seed, 1000 + r);
        cfg.modalities = joint;
        const auto summary = summarize(run_chain(data, cfg), cfg.burn_in);
        std::size_t tp = 0, fp = 0;
        for (std::size_t j = 0; j < summary.genes.size(); ++j) {
            if (summary.genes[j].p_null >= 0.5) continue;
            (rep.truth.labels[j] == GeneLabel::Null ? fp : tp) += 1;
        }
        if (tp >= 3 && fp <= 2) ++good;
        listing += fmt::format(" {}/{}", tp, fp);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {good >= 8 && secs < 1800.0,
            fmt::format("{} of 10 replicates meet >=3 TP and <=2 FP (TP/FP:{}); {:.0f}s", good, listing, secs)};
}

// --- 7 ---------------------------------------------------------------------

Outcome joint_not_worse() {
    SimConfig sim;
    sim.n_genes = 50;
    sim.n_rna = 30;
    sim.gwas_effects = {0.4, 0.8};
    sim.rna_log2_fc = {0.3, 0.6};
    sim.seed = 707;
    constexpr std::size_t kReps = 20;
    const auto start = std::chrono::steady_clock::now();
    std::map<std::string, std::vector<double>> aucs;
    for (std::size_t r = 0; r < kReps; ++r) {
        const Replicate rep = gen_replicate(sim, r);
        for (const char* name : {"joint", "gwas", "rna"}) {
            const ModalitySet ms = parse_modality_set(name);
            const auto data = ModelData::build(ms.rna ? &rep.rna : nullptr, ms.gwas ? &rep.gwas : nullptr, ms);
            ChainConfig cfg;
            cfg.n_iter = 10000;
            cfg.burn_in = 5000;
            cfg.seed = derive_seed(sim.seed, 1000 + r);
            cfg.modalities = ms;
            const auto summary = summarize(run_chain(data, cfg), cfg.burn_in);
            std::vector<ScoredGene> scored;
            for (std::size_t j = 0; j < summary.genes.size(); ++j) {
                scored.push_back({summary.genes[j].p_null, rep.truth.labels[j] != GeneLabel::Null});
            }
            aucs[name].push_back(auc(scored).value());
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double joint = mean_of(aucs["joint"]);
    const double gwas = mean_of(aucs["gwas"]);
    const double rna = mean_of(aucs["rna"]);
    return {joint - gwas >= -0.01 && joint - rna >= -0.01,
            fmt::format("mean AUC over {} replicates: joint {:.4f}, GWAS-only {:.4f}, RNA-only {:.4f}; {:.0f}s", kReps,
                        joint, gwas, rna, secs)};
}

// --- 8 ---------------------------------------------------------------------

Outcome checkpoint_drift() {
    SimConfig sim;
    sim.n_genes = 50;
    sim.seed = 808;
    const Replicate rep = gen_replicate(sim, 0);
    const ModalitySet joint{true, true};
    const auto data = ModelData::build(&rep.rna, &rep.gwas, joint);
    double worst = 0.0;
    std::size_t n_checks = 0;
    for (auto family : kAllFamilies) {
        ChainConfig cfg;
        cfg.n_iter = 10000;
        cfg.burn_in = 5000;
        cfg.seed = 88;
        cfg.modalities = joint;
        cfg.prior.family = family;
        cfg.checkpoint_interval = 1000;
        const Trace t = run_chain(data, cfg);
        for (const auto& c : t.checkpoints) {
            worst = std::max(worst, std::abs(c.incremental - c.recomputed));
            ++n_checks;
        }
    }
    return {worst < 1e-6 && n_checks >= 50,
            fmt::format("max |incremental - recomputed| = {:.2e} over {} checkpoints, 5 families x 10k iterations",
                        worst, n_checks)};
}

// --- 9 ---------------------------------------------------------------------

Outcome missing_modality() {
    SimConfig sim;
    sim.n_genes = 10;
    sim.n_ben = 2;
    sim.n_del = 2;
    sim.n_gwas = 300;
    sim.n_rna = 20;
    sim.seed = 909;
    const Replicate rep = gen_replicate(sim, 0);

    // RNA-seq with genes 0..4 only and every sample a control: no fold-change information,
    // so genes 5..9 are GWAS-only and the joint label posterior equals the GWAS-only one.
    RnaSeqDataset rna;
    const std::size_t n = rep.rna.n_samples();
    rna.counts = Matrix<std::int64_t>(n, 5);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < 5; ++j) rna.counts(i, j) = rep.rna.counts(i, j);
    }
    rna.treatment.assign(n, 0);
    rna.log_library_size = rep.rna.log_library_size;
    rna.log_gene_length.assign(rep.rna.log_gene_length.begin(), rep.rna.log_gene_length.begin() + 5);
    rna.covariates = Matrix<double>(n, 0);
    rna.gene_ids.assign(rep.rna.gene_ids.begin(), rep.rna.gene_ids.begin() + 5);
    rna.sample_ids = rep.rna.sample_ids;

    const ModalitySet joint{true, true};
    const ModalitySet gwas_only{false, true};
    const auto joint_data = ModelData::build(&rna, &rep.gwas, joint);
    const auto gwas_data = ModelData::build(nullptr, &rep.gwas, gwas_only);

    std::vector<Trace> joint_traces, gwas_traces;
    for (std::uint64_t seed : {91, 92, 93}) {
        ChainConfig cfg;
        cfg.n_iter = 20000;
        cfg.burn_in = 5000;
        cfg.seed = seed;
        cfg.modalities = joint;
        joint_traces.push_back(run_chain(joint_data, cfg));
        cfg.modalities = gwas_only;
        cfg.seed = seed + 100;
        gwas_traces.push_back(run_chain(gwas_data, cfg));
    }

    auto pooled = [](const std::vector<Trace>& traces, std::size_t u, GeneLabel label, std::size_t burn_in) {
        double m = 0.0, var = 0.0;
        for (const auto& t : traces) {
            const auto s = occupancy_series(t, u, label, burn_in);
            m += mean_of(s);
            const double se = batch_means_se(s);
            var += se * se;
        }
        const double k = static_cast<double>(traces.size());
        return std::pair{m / k, std::sqrt(var) / k};
    };

    double worst_z = 0.0;
    std::string listing;
    for (std::size_t j = 5; j < 10; ++j) {
        const std::string& id = rep.gwas.gene_ids[j];
        const auto find = [&](const Trace& t) {
            return static_cast<std::size_t>(std::find(t.gene_ids.begin(), t.gene_ids.end(), id) - t.gene_ids.begin());
        };
        const std::size_t uj = find(joint_traces[0]);
        const std::size_t ug = find(gwas_traces[0]);
        for (auto label : kAllLabels) {
            const auto [mj, sj] = pooled(joint_traces, uj, label, 5000);
            const auto [mg, sg] = pooled(gwas_traces, ug, label, 5000);
            const double se = std::sqrt(sj * sj + sg * sg);
            const double z = se > 0.0 ? std::abs(mj - mg) / se : (mj == mg ? 0.0 : INFINITY);
            worst_z = std::max(worst_z, z);
            if (label == GeneLabel::Null) listing += fmt::format(" {}:{:.3f}/{:.3f}", id, mj, mg);
        }
    }
    return {worst_z <= 3.0, fmt::format("max |joint - GWAS-only| = {:.2f} MC s.e. over genes 5..9 (P_null joint/GWAS:{})",
                                        worst_z, listing)};
}

// --- 10 --------------------------------------------------------------------

Outcome metric_oracles() {
    Rng rng(derive_seed(10, 0));
    std::size_t mismatches = 0;
    for (int inst = 0; inst < 200; ++inst) {
        const std::size_t J = 2 + static_cast<std::size_t>(draw_uniform(rng) * 49.0);
        const bool coarse = inst % 2 == 0;
        std::vector<ScoredGene> genes(J);
        for (std::size_t j = 0; j < J; ++j) {
            double p = draw_uniform(rng);
            if (coarse) p = std::round(p * 10.0) / 10.0;
            genes[j] = {p, j == 0 ? true : (j == 1 ? false : draw_bernoulli(rng, 0.3))};
        }
        if (auc(genes).value() != oracle::brute_force_auc(genes)) ++mismatches;
    }
    // hand cases: p_null (0.1, 0.8, 0.5) with truth (non-null, null, non-null)
    const std::vector<ScoredGene> hand{{0.1, true}, {0.8, false}, {0.5, true}};
    const double log_hand = -(std::log(0.9) + std::log(0.8) + std::log(0.5));
    const double brier_hand = 0.1 * 0.1 + 0.2 * 0.2 + 0.5 * 0.5;
    const double log_err = std::abs(log_score(hand) - log_hand);
    const double brier_err = std::abs(brier_score(hand) - brier_hand);
    return {mismatches == 0 && log_err < 1e-12 && brier_err < 1e-12,
            fmt::format("{} AUC mismatches in 200 instances; log-score error {:.1e}, Brier error {:.1e}", mismatches,
                        log_err, brier_err)};
}

// --- 11 --------------------------------------------------------------------

Outcome simulation_checks() {
    Rng rng(derive_seed(11, 0));
    constexpr std::size_t kDraws = 1000000;
    std::size_t inside = 0;
    for (std::size_t i = 0; i < kDraws; ++i) {
        const double x = draw_beta(rng, 20.0, 35.0);
        if (x > 0.2 && x < 0.5) ++inside;
    }
    const double mass = static_cast<double>(inside) / static_cast<double>(kDraws);
    const boost::math::beta_distribution<double> beta(20.0, 35.0);
    const double exact = boost::math::cdf(beta, 0.5) - boost::math::cdf(beta, 0.2);

    // thinning on a flat Poisson baseline with large totals
    constexpr std::size_t n = 100, J = 4;
    Matrix<std::int64_t> baseline(n, J);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < J; ++j) baseline(i, j) = draw_poisson(rng, 10000.0);
    }
    SimConfig sim;
    sim.n_genes = J;
    sim.n_ben = 1;
    sim.n_del = 1;
    sim.rna_log2_fc = {1.5};
    SimTruth truth = make_truth(sim, rng);
    const RnaSeqDataset ds = gen_rnaseq_thinned(baseline, sim, truth, rng);
    double worst_rel = 0.0;
    double min_total = INFINITY;
    const auto log2fc = truth.rna_log2_fc();
    for (std::size_t j = 0; j < J; ++j) {
        double before[2] = {0, 0}, after[2] = {0, 0};
        for (std::size_t i = 0; i < n; ++i) {
            before[ds.treatment[i]] += static_cast<double>(baseline(i, j));
            after[ds.treatment[i]] += static_cast<double>(ds.counts(i, j));
        }
        min_total = std::min({min_total, after[0], after[1]});
        const double realized = (after[1] / after[0]) / (before[1] / before[0]);
        worst_rel = std::max(worst_rel, std::abs(realized / std::exp2(log2fc[j]) - 1.0));
    }
    const bool ok = std::abs(mass - 0.977) <= 0.002 && worst_rel < 0.05 && min_total >= 1e5;
    return {ok, fmt::format("Beta(20,35) mass in (0.2,0.5) = {:.4f} (exact {:.4f}); thinned fold-change max relative "
                            "error {:.4f} at group totals >= {:.0f}",
                            mass, exact, worst_rel, min_total)};
}

// --- 12 --------------------------------------------------------------------

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "threegroups");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        files[fs::relative(entry.path(), root).string()] =
            std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    return files;
}

Outcome determinism() {
    const fs::path base = fs::temp_directory_path() / fmt::format("threegroups_acceptance_{}", ::getpid());
    fs::remove_all(base);
    std::vector<int> codes;
    for (const char* run : {"a", "b"}) {
        const fs::path dir = base / run;
        codes.push_back(cli({"simulate", "--seed", "12", "--set", "genes=20", "--set", "reps=2", "--set", "n_gwas=300",
                             "--set", "n_rna=30", "--out", (dir / "sim").string()}));
        codes.push_back(cli({"fit", "--archive", (dir / "sim").string(), "--iters", "600", "--chains", "2", "--workers",
                             "2", "--seed", "5", "--out", (dir / "fit").string()}));
        codes.push_back(cli({"score", "--archive", (dir / "sim").string(), "--model",
                             "joint=" + (dir / "fit").string(), "--out", (dir / "score").string()}));
        codes.push_back(cli({"summarize", "--trace", (dir / "fit" / "rep_000" / "trace_chain0.jsonl").string(),
                             "--trace", (dir / "fit" / "rep_000" / "trace_chain1.jsonl").string(), "--out",
                             (dir / "summary").string()}));
    }
    const bool all_ok = std::all_of(codes.begin(), codes.end(), [](int c) { return c == 0; });
    const auto a = snapshot(base / "a");
    const auto b = snapshot(base / "b");
    std::size_t differing = 0;
    for (const auto& [name, bytes] : a) {
        const auto it = b.find(name);
        if (it == b.end() || it->second != bytes) ++differing;
    }
    if (a.size() != b.size()) ++differing;
    fs::remove_all(base);
    return {all_ok && differing == 0 && !a.empty(),
            fmt::format("{} files across simulate/fit/score/summarize, {} differ between reruns", a.size(), differing)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"prior pmf sums to one", prior_pmf_sums_to_one},
        {"multiplicity penalty at J=1000", multiplicity_penalty},
        {"effect densities normalize", densities_normalize},
        {"negative binomial pmf and variance", negative_binomial},
        {"sampler recovers the label prior", prior_recovery},
        {"signal recovery on simulated replicates", signal_recovery},
        {"joint AUC not below single-modality AUC", joint_not_worse},
        {"incremental log-posterior matches recomputation", checkpoint_drift},
        {"GWAS-only genes match a GWAS-only fit", missing_modality},
        {"metric oracles", metric_oracles},
        {"simulation generator checks", simulation_checks},
        {"byte-identical CLI reruns", determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, fmt::format("threw: {}", e.what())};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!o.pass) ++failures;
        fmt::print("{} criterion {:2d} ({}): {} [{:.1f}s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                   o.detail, secs);
        std::fflush(stdout);
    }
    fmt::print("{} of {} criteria passed\n", criteria.size() - static_cast<std::size_t>(failures), criteria.size());
    return failures == 0 ? 0 : 1;
}
