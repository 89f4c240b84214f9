#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "threegroups/threegroups.hpp"

namespace threegroups::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Run fn(0..n-1) on up to `workers` threads; the first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    auto work = [&] {
        for (std::size_t k = next++; k < n; k = next++) {
            try {
                fn(k);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
}

const std::set<std::string>& unhashed_keys() {
    static const std::set<std::string> keys{"out", "force", "workers", "max_ram_estimate", "baseline_counts",
                                            "rna_counts", "rna_samples", "rna_genes", "rna_covariates",
                                            "gwas_carriers", "gwas_phenotype", "gwas_covariates", "gwas_genotypes",
                                            "variant_map", "archive", "traces"};
    return keys;
}

std::vector<double> parse_double_list(const std::string& text, const std::string& key) {
    std::vector<double> out;
    for (const auto& item : split(text, ',')) out.push_back(parse_number<double>(item, key));
    return out;
}

}  // namespace

const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys{
        // run
        "seed", "modality", "family", "iters", "burnin", "thin", "chains", "workers", "checkpoint", "write_trace",
        "out", "force", "max_ram_estimate",
        // prior
        "kappa", "a", "r", "local_scale", "fixed_tau", "hyper_tau", "hyper_r", "invgamma_shape", "invgamma_scale",
        "local_mu_shape", "local_mu_scale", "halft_nu", "halft_scale", "mu0_precision", "nuisance_precision",
        // simulation
        "genes", "n_ben", "n_del", "n_gwas", "n_rna", "gwas_effects", "rna_log2_fc", "reps", "maf_a", "maf_b",
        "intercept_sd", "fixed_intercept", "treated_fraction", "baseline", "baseline_counts",
        // inputs
        "rna_counts", "rna_samples", "rna_genes", "rna_covariates", "gwas_carriers", "gwas_phenotype",
        "gwas_covariates", "gwas_genotypes", "variant_map", "archive", "replicates",
        // score and summarize
        "models", "fpr_targets", "traces", "curve_genes"};
    return keys;
}

std::string config_hash(const KeyValueConfig& kv) {
    std::string canonical;
    for (const auto& [k, v] : kv.values()) {
        if (unhashed_keys().count(k) != 0) continue;
        if (k == "models") {
            // model names only; directories are locations
            std::string names;
            for (const auto& item : split(v, ',')) names += trim(item.substr(0, item.find('='))) + ",";
            canonical += k + "=" + names + "\n";
            continue;
        }
        canonical += k + "=" + v + "\n";
    }
    return hash_hex(fnv1a(canonical));
}

RunConfig resolve(const std::string& command, const KeyValueConfig& kv) {
    const std::set<std::string> known(known_keys().begin(), known_keys().end());
    for (const auto& [k, v] : kv.values()) {
        if (known.count(k) == 0) throw ValidationError(fmt::format("unknown configuration key '{}'", k));
    }
    auto str = [&](const std::string& key, std::string def = {}) { return kv.get(key).value_or(std::move(def)); };
    auto num = [&](const std::string& key, double def) {
        const auto v = kv.get(key);
        return v ? parse_number<double>(*v, key) : def;
    };
    auto count = [&](const std::string& key, std::size_t def) {
        const auto v = kv.get(key);
        return v ? parse_number<std::size_t>(*v, key) : def;
    };
    auto flag = [&](const std::string& key, bool def) {
        const auto v = kv.get(key);
        return v ? parse_bool(*v, key) : def;
    };

    RunConfig c;
    c.command = command;
    c.seed = kv.get("seed") ? parse_number<std::uint64_t>(*kv.get("seed"), "seed") : 1;
    c.modalities = parse_modality_set(str("modality", "joint"));
    c.iters = count("iters", 20000);
    c.burnin_given = kv.has("burnin");
    c.burnin = count("burnin", c.iters / 2);
    c.thin = count("thin", 1);
    c.chains = count("chains", 1);
    c.workers = count("workers", 1);
    c.checkpoint = count("checkpoint", 1000);
    c.write_trace = flag("write_trace", true);
    c.out = str("out");
    c.force = flag("force", false);
    c.max_ram_estimate = flag("max_ram_estimate", false);
    if (c.chains == 0) throw ValidationError("chains must be >= 1");

    auto& p = c.prior;
    p.family = parse_family(str("family", family_name(p.family)));
    p.dirichlet.kappa = num("kappa", p.dirichlet.kappa);
    if (const auto a = kv.get("a")) {
        const auto v = parse_double_list(*a, "a");
        if (v.size() != 3) throw ValidationError("a needs exactly three values");
        std::copy(v.begin(), v.end(), p.dirichlet.a.begin());
    }
    p.r = num("r", p.r);
    p.local_scale = num("local_scale", p.local_scale);
    p.fixed_tau = num("fixed_tau", p.fixed_tau);
    p.hyper_tau = num("hyper_tau", p.hyper_tau);
    p.hyper_r = num("hyper_r", p.hyper_r);
    p.invgamma_shape = num("invgamma_shape", p.invgamma_shape);
    p.invgamma_scale = num("invgamma_scale", p.invgamma_scale);
    p.local_mu_shape = num("local_mu_shape", p.local_mu_shape);
    p.local_mu_scale = num("local_mu_scale", p.local_mu_scale);
    p.halft_nu = num("halft_nu", p.halft_nu);
    p.halft_scale = num("halft_scale", p.halft_scale);
    p.mu0_precision = num("mu0_precision", p.mu0_precision);
    p.nuisance_precision = num("nuisance_precision", p.nuisance_precision);
    p.validate();

    auto& s = c.sim;
    s.seed = c.seed;
    s.n_genes = count("genes", s.n_genes);
    s.n_ben = count("n_ben", s.n_ben);
    s.n_del = count("n_del", s.n_del);
    s.n_gwas = count("n_gwas", s.n_gwas);
    s.n_rna = count("n_rna", s.n_rna);
    if (const auto v = kv.get("gwas_effects")) s.gwas_effects = parse_double_list(*v, "gwas_effects");
    if (const auto v = kv.get("rna_log2_fc")) s.rna_log2_fc = parse_double_list(*v, "rna_log2_fc");
    s.maf_a = num("maf_a", s.maf_a);
    s.maf_b = num("maf_b", s.maf_b);
    s.intercept_sd = num("intercept_sd", s.intercept_sd);
    if (const auto v = kv.get("fixed_intercept")) s.fixed_intercept = parse_number<double>(*v, "fixed_intercept");
    s.treated_fraction = num("treated_fraction", s.treated_fraction);
    const auto baseline = str("baseline", "synthetic");
    if (baseline == "synthetic") {
        s.baseline = Baseline::SyntheticNB;
    } else if (baseline == "thin") {
        s.baseline = Baseline::ThinCounts;
        s.baseline_path = str("baseline_counts");
        if (s.baseline_path.empty()) throw ValidationError("baseline = thin needs baseline_counts");
    } else {
        throw ValidationError(fmt::format("baseline must be 'synthetic' or 'thin', got '{}'", baseline));
    }
    c.reps = count("reps", 1);

    c.rna_counts = str("rna_counts");
    c.rna_samples = str("rna_samples");
    c.rna_genes = str("rna_genes");
    c.rna_covariates = str("rna_covariates");
    c.gwas_carriers = str("gwas_carriers");
    c.gwas_phenotype = str("gwas_phenotype");
    c.gwas_covariates = str("gwas_covariates");
    c.gwas_genotypes = str("gwas_genotypes");
    c.variant_map = str("variant_map");
    c.archive = str("archive");
    if (const auto v = kv.get("replicates"); v && *v != "all") {
        std::vector<std::size_t> reps;
        for (const auto& item : split(*v, ',')) reps.push_back(parse_number<std::size_t>(item, "replicates"));
        c.replicates = reps;
    }

    if (const auto v = kv.get("models")) {
        for (const auto& item : split(*v, ',')) {
            const auto eq = item.find('=');
            if (eq == std::string::npos || eq == 0 || eq + 1 == item.size()) {
                throw ValidationError(fmt::format("model '{}' must be given as name=directory", item));
            }
            c.models.emplace_back(trim(item.substr(0, eq)), trim(item.substr(eq + 1)));
        }
    }
    if (const auto v = kv.get("fpr_targets")) c.fpr_targets = parse_double_list(*v, "fpr_targets");
    if (const auto v = kv.get("traces")) {
        for (const auto& item : split(*v, ',')) c.traces.push_back(trim(item));
    }
    if (kv.has("curve_genes")) c.curve_genes = count("curve_genes", 0);
    c.config_hash = config_hash(kv);
    return c;
}

std::size_t estimate_fit_bytes(std::size_t n_rna, std::size_t genes_rna, std::size_t n_gwas,
                               std::size_t genes_gwas, std::size_t iters, std::size_t chains) {
    const std::size_t genes = std::max(genes_rna, genes_gwas);
    const std::size_t data = n_rna * genes_rna * sizeof(std::int64_t) + n_gwas * genes_gwas * sizeof(int) +
                             n_gwas * genes_gwas * sizeof(std::uint32_t) / 2;
    const std::size_t per_record = sizeof(TraceRecord) + genes * (sizeof(GeneLabel) + sizeof(double)) +
                                   genes / 4 * 2 * sizeof(std::pair<std::uint32_t, double>);
    return data + chains * (iters * per_record + genes * 16 * sizeof(double));
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const RunConfig& cfg) {
    const auto start = Clock::now();
    cfg.sim.validate();
    Matrix<std::int64_t> baseline;
    std::vector<std::string> baseline_ids;
    if (cfg.sim.baseline == Baseline::ThinCounts) {
        std::tie(baseline, baseline_ids) = read_count_matrix(cfg.sim.baseline_path);
        if (baseline_ids.size() != cfg.sim.n_genes) {
            throw ValidationError(fmt::format("baseline_counts has {} genes but genes = {}", baseline_ids.size(),
                                              cfg.sim.n_genes));
        }
    }
    const fs::path root = cfg.out;
    prepare_output_dir(root, cfg.force);
    std::vector<Replicate> reps(cfg.reps);
    parallel_for(cfg.reps, cfg.workers, [&](std::size_t r) {
        reps[r] = gen_replicate(cfg.sim, r, baseline_ids.empty() ? nullptr : &baseline, baseline_ids);
        for (const auto& report : {validate_dataset(reps[r].rna), validate_dataset(reps[r].gwas)}) {
            if (!report.empty()) throw RuntimeAbort(fmt::format("replicate {} failed validation", r));
        }
        write_replicate(root / replicate_dir_name(r), reps[r], cfg.config_hash);
    });
    write_manifest(root, reps, cfg.config_hash);
    fmt::print(stderr, "simulate: {} replicates in {:.2f} s -> {}\n", cfg.reps, seconds_since(start), root.string());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

namespace {

struct FitUnit {
    fs::path out_dir;
    std::string name;
    std::unique_ptr<RnaSeqDataset> rna;
    std::unique_ptr<GwasDataset> gwas;
    ModelData data;
    std::vector<Trace> traces;
};

std::unique_ptr<FitUnit> load_unit(const RunConfig& cfg, const RnaPaths& rp, const GwasPaths& gp, fs::path out_dir,
                                   std::string name) {
    auto u = std::make_unique<FitUnit>();
    u->out_dir = std::move(out_dir);
    u->name = std::move(name);
    if (cfg.modalities.rna) u->rna = std::make_unique<RnaSeqDataset>(read_rna_dataset(rp));
    if (cfg.modalities.gwas) u->gwas = std::make_unique<GwasDataset>(read_gwas_dataset(gp));
    u->data = ModelData::build(u->rna.get(), u->gwas.get(), cfg.modalities);
    u->traces.resize(cfg.chains);
    return u;
}

void write_diagnostics(const fs::path& path, const std::vector<Trace>& traces, std::size_t burn_in,
                       std::string_view hash) {
    TableWriter w(path, "diagnostics", hash, {"chain", "quantity", "value"});
    for (const auto& t : traces) {
        const auto chain = std::to_string(t.chain_id);
        for (const auto& [block, a] : t.acceptance) {
            w.row({chain, "acceptance_" + block, format_double(a.rate())});
        }
        std::vector<double> lp, tau0;
        for (const auto& r : t.records) {
            if (r.iteration < burn_in) continue;
            lp.push_back(r.log_posterior);
            tau0.push_back(r.hyper.tau0);
        }
        const auto k = non_null_series(t, burn_in);
        w.row({chain, "ess_log_posterior", format_double(effective_sample_size(lp))});
        w.row({chain, "ess_non_null_count", format_double(effective_sample_size(k))});
        if (t.modalities.rna) w.row({chain, "ess_tau0", format_double(effective_sample_size(tau0))});
        double drift = 0.0;
        for (const auto& c : t.checkpoints) drift = std::max(drift, std::abs(c.incremental - c.recomputed));
        w.row({chain, "max_checkpoint_drift", format_double(drift)});
        w.row({chain, "clamped_exponents", std::to_string(t.numeric.clamped_exponents)});
    }
}

}  // namespace

int cmd_fit(const RunConfig& cfg) {
    const auto start = Clock::now();
    std::vector<std::unique_ptr<FitUnit>> units;
    const fs::path root = cfg.out;
    if (!cfg.archive.empty()) {
        for (const auto& entry : read_manifest(cfg.archive)) {
            if (cfg.replicates && std::find(cfg.replicates->begin(), cfg.replicates->end(), entry.replicate) ==
                                      cfg.replicates->end()) {
                continue;
            }
            const auto name = replicate_dir_name(entry.replicate);
            units.push_back(load_unit(cfg, replicate_rna_paths(entry.directory),
                                      replicate_gwas_paths(entry.directory), root / name, name));
        }
        if (units.empty()) throw ValidationError("no replicates selected from the archive");
    } else {
        RnaPaths rp{cfg.rna_counts, cfg.rna_samples, cfg.rna_genes, cfg.rna_covariates};
        GwasPaths gp{cfg.gwas_carriers, cfg.gwas_phenotype, cfg.gwas_covariates, cfg.gwas_genotypes, cfg.variant_map};
        if (cfg.modalities.rna && (rp.counts.empty() || rp.samples.empty())) {
            throw ValidationError("RNA-seq fit needs rna_counts and rna_samples (or an archive)");
        }
        if (cfg.modalities.gwas && gp.phenotype.empty()) {
            throw ValidationError("GWAS fit needs gwas_phenotype and gwas_carriers (or an archive)");
        }
        units.push_back(load_unit(cfg, rp, gp, root, "fit"));
    }

    if (cfg.max_ram_estimate) {
        std::size_t total = 0;
        for (const auto& u : units) {
            total += estimate_fit_bytes(u->rna ? u->rna->n_samples() : 0, u->rna ? u->rna->n_genes() : 0,
                                        u->gwas ? u->gwas->n_individuals() : 0, u->gwas ? u->gwas->n_genes() : 0,
                                        cfg.iters / cfg.thin, cfg.chains);
        }
        const std::size_t concurrent = std::min(cfg.workers, units.size() * cfg.chains);
        fmt::print("estimated state: {} units, {:.1f} MiB total, {:.1f} MiB peak with {} workers\n", units.size(),
                   static_cast<double>(total) / (1 << 20),
                   static_cast<double>(total) / static_cast<double>(units.size() * cfg.chains) *
                       static_cast<double>(std::max<std::size_t>(concurrent, 1)) / (1 << 20),
                   cfg.workers);
        return kExitOk;
    }

    prepare_output_dir(root, cfg.force);
    for (const auto& u : units) fs::create_directories(u->out_dir);

    ChainConfig base;
    base.n_iter = cfg.iters;
    base.burn_in = cfg.burnin;
    base.seed = cfg.seed;
    base.thinning = cfg.thin;
    base.prior = cfg.prior;
    base.modalities = cfg.modalities;
    base.checkpoint_interval = cfg.checkpoint;
    base.validate();

    const std::size_t n_jobs = units.size() * cfg.chains;
    parallel_for(n_jobs, cfg.workers, [&](std::size_t job) {
        FitUnit& u = *units[job / cfg.chains];
        const std::size_t chain = job % cfg.chains;
        const auto t0 = Clock::now();
        ChainConfig c = base;
        c.chain_id = chain;
        u.traces[chain] = run_chain(u.data, c);
        if (cfg.write_trace) {
            write_trace(u.out_dir / fmt::format("trace_chain{}.jsonl", chain), u.traces[chain], cfg.config_hash);
        }
        fmt::print(stderr, "fit {} chain {}: {:.2f} s\n", u.name, chain, seconds_since(t0));
    });

    for (const auto& u : units) {
        write_summary(u->out_dir / "summary.tsv", summarize(u->traces, cfg.burnin), cfg.config_hash);
        write_diagnostics(u->out_dir / "diagnostics.tsv", u->traces, cfg.burnin, cfg.config_hash);
        for (const auto& t : u->traces) {
            for (const auto& cp : t.checkpoints) {
                if (std::abs(cp.incremental - cp.recomputed) > 1e-6) {
                    fmt::print(stderr, "warning: {} chain {} log-posterior drift {} at iteration {}\n", u->name,
                               t.chain_id, cp.incremental - cp.recomputed, cp.iteration);
                }
            }
        }
    }
    fmt::print(stderr, "fit: {} units x {} chains in {:.2f} s -> {}\n", units.size(), cfg.chains,
               seconds_since(start), root.string());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

int cmd_score(const RunConfig& cfg) {
    if (cfg.archive.empty()) throw ValidationError("score needs the simulation archive (--archive)");
    if (cfg.models.empty()) throw ValidationError("score needs at least one --model name=directory");
    const auto manifest = read_manifest(cfg.archive);
    std::vector<SimTruth> truths;
    for (const auto& e : manifest) truths.push_back(read_truth(e.directory / "truth.tsv"));

    std::map<std::string, std::vector<std::vector<ScoredGene>>> scored;
    for (const auto& [model, dir] : cfg.models) {
        auto& sets = scored[model];
        for (std::size_t r = 0; r < manifest.size(); ++r) {
            const auto path = fs::path(dir) / replicate_dir_name(manifest[r].replicate) / "summary.tsv";
            const auto rows = read_summary(path);
            std::map<std::string, double> p_null;
            for (const auto& row : rows) p_null[row.gene_id] = row.p_null;
            std::vector<std::string> missing, extra;
            const std::set<std::string> truth_ids(truths[r].gene_ids.begin(), truths[r].gene_ids.end());
            for (const auto& id : truths[r].gene_ids) {
                if (p_null.count(id) == 0) missing.push_back(id);
            }
            for (const auto& [id, p] : p_null) {
                if (truth_ids.count(id) == 0) extra.push_back(id);
            }
            if (!missing.empty() || !extra.empty()) {
                std::string msg = fmt::format("gene ids of {} do not match the truth file", path.string());
                for (const auto& id : missing) msg += "\n  - " + id + " (truth only)";
                for (const auto& id : extra) msg += "\n  + " + id + " (summary only)";
                throw ValidationError(msg);
            }
            std::vector<ScoredGene> genes;
            for (std::size_t j = 0; j < truths[r].gene_ids.size(); ++j) {
                genes.push_back({p_null[truths[r].gene_ids[j]], !is_null(truths[r].labels[j])});
            }
            sets.push_back(std::move(genes));
        }
    }

    const fs::path root = cfg.out;
    prepare_output_dir(root, cfg.force);
    TableWriter metrics(root / "metrics.tsv", "metrics", cfg.config_hash, {"model", "replicate", "metric", "value"});
    TableWriter points(root / "operating_points.tsv", "operating_points", cfg.config_hash,
                       {"model", "target_fpr", "cutoff", "mean_fpr", "diagnostic"});
    for (const auto& [model, dir] : cfg.models) {
        const auto& sets = scored[model];
        std::vector<OperatingPoint> ops;
        for (double target : cfg.fpr_targets) {
            ops.push_back(tpr_at_mean_fpr(sets, target));
            const auto& op = ops.back();
            points.row({model, format_double(target), format_double(op.cutoff), format_double(op.mean_fpr),
                        op.diagnostic.empty() ? kMissing : op.diagnostic});
            if (!op.diagnostic.empty()) fmt::print(stderr, "score {}: {}\n", model, op.diagnostic);
        }
        for (std::size_t r = 0; r < sets.size(); ++r) {
            const auto rep = std::to_string(manifest[r].replicate);
            metrics.row({model, rep, "log_score", format_double(log_score(sets[r]))});
            metrics.row({model, rep, "brier", format_double(brier_score(sets[r]))});
            metrics.row({model, rep, "auc", format_optional(auc(sets[r]))});
            for (std::size_t k = 0; k < ops.size(); ++k) {
                metrics.row({model, rep, fmt::format("tpr_at_fpr_{}", cfg.fpr_targets[k]),
                             format_optional(ops[k].tpr[r])});
            }
        }
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// summarize
// ---------------------------------------------------------------------------

int cmd_summarize(const RunConfig& cfg) {
    if (cfg.traces.empty()) throw ValidationError("summarize needs at least one --trace file");
    std::vector<Trace> traces;
    bool partial = false;
    for (const auto& path : cfg.traces) {
        auto loaded = read_trace(path);
        if (!loaded.complete || loaded.bad_lines > 0) {
            fmt::print(stderr, "warning: trace '{}' is truncated ({} records read, {} unreadable lines)\n", path,
                       loaded.trace.records.size(), loaded.bad_lines);
            partial = true;
        }
        traces.push_back(std::move(loaded.trace));
    }
    const std::size_t burn_in = cfg.burnin_given ? cfg.burnin : traces.front().burn_in;
    const auto summary = summarize(traces, burn_in);
    if (partial) fmt::print(stderr, "warning: report built from {} retained iterations only\n", summary.retained);

    const fs::path root = cfg.out;
    prepare_output_dir(root, cfg.force);
    write_summary(root / "report.tsv", summary, cfg.config_hash);
    {
        TableWriter w(root / "volcano.tsv", "volcano", cfg.config_hash,
                      {"gene_id", "modality", "marginal_effect", "p_non_null", "mm_cutoff"});
        for (const auto& p : volcano_data(summary)) {
            w.row({p.gene_id, modality_name(p.modality), format_double(p.marginal_effect),
                   format_double(p.p_non_null), format_double(kMedianProbabilityCutoff)});
        }
    }
    {
        TableWriter w(root / "selection.tsv", "selection", cfg.config_hash, {"gene_id", "label"});
        for (const auto& g : median_probability_select(summary)) w.row({g.gene_id, label_name(g.label)});
    }
    {
        const auto& dirichlet = traces.front().prior.dirichlet;
        const std::size_t J = cfg.curve_genes.value_or(traces.front().gene_ids.size());
        TableWriter w(root / "log_prior_curve.tsv", "log_prior_curve", cfg.config_hash,
                      {"k", "k1", "k2", "k3", "log_prior"});
        for (std::size_t k = 0; k <= J; k += 2) {
            w.row({std::to_string(k), std::to_string(J - k), std::to_string(k / 2), std::to_string(k / 2),
                   format_double(log_model_prior(J - k, k / 2, k / 2, dirichlet))});
        }
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

int run(int argc, char** argv) {
    CLI::App app{"Three-groups Bayesian model for joint GWAS and RNA-seq gene selection"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> sets, models, traces;
    std::map<std::string, std::string> flags;
    app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
    app.add_option("--set", sets, "override one configuration key (key=value), repeatable");
    auto add = [&](const std::string& name, const std::string& key, const std::string& help) {
        return app.add_option_function<std::string>(
            name, [&flags, key](const std::string& v) { flags[key] = v; }, help);
    };
    add("--seed", "seed", "master random seed");
    add("--modality", "modality", "rna, gwas or joint")->check(CLI::IsMember({"rna", "gwas", "joint"}));
    add("--family", "family", "effect prior family")
        ->check(CLI::IsMember({"local-fixed", "local-hyper", "nonlocal-fixed", "nonlocal-pimom", "nonlocal-invgamma"}));
    add("--iters", "iters", "MCMC iterations");
    add("--burnin", "burnin", "iterations discarded before summaries");
    add("--chains", "chains", "independent chains per fit");
    add("--workers", "workers", "worker threads");
    add("--out", "out", "output directory");
    add("--archive", "archive", "simulation archive directory");
    add("--replicates", "replicates", "comma-separated replicate indices, or all");
    app.add_flag_callback("--force", [&flags] { flags["force"] = "true"; }, "overwrite a non-empty output directory");
    app.add_flag_callback("--max-ram-estimate", [&flags] { flags["max_ram_estimate"] = "true"; },
                          "print the estimated state size and exit");
    app.add_option("--model", models, "name=fit directory to score, repeatable");
    app.add_option("--trace", traces, "trace file to summarize, repeatable");

    std::vector<CLI::App*> subs{
        app.add_subcommand("simulate", "generate replicate GWAS + RNA-seq datasets with known labels"),
        app.add_subcommand("fit", "run the sampler on datasets or an archive"),
        app.add_subcommand("score", "score fitted summaries against simulation truth"),
        app.add_subcommand("summarize", "per-gene report, volcano and log-prior tables from traces")};
    for (auto* s : subs) s->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        KeyValueConfig kv = config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(config_path);
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ValidationError(fmt::format("--set expects key=value, got '{}'", s));
            kv.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
        }
        for (const auto& [k, v] : flags) kv.set(k, v);
        auto join = [](const std::vector<std::string>& v) {
            std::string out;
            for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
            return out;
        };
        if (!models.empty()) kv.set("models", join(models));
        if (!traces.empty()) kv.set("traces", join(traces));

        std::string command;
        for (auto* s : subs) {
            if (s->parsed()) command = s->get_name();
        }
        const RunConfig cfg = resolve(command, kv);
        if (command == "simulate") return cmd_simulate(cfg);
        if (command == "fit") return cmd_fit(cfg);
        if (command == "score") return cmd_score(cfg);
        return cmd_summarize(cfg);
    } catch (const ValidationError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        fmt::print(stderr, "aborted: {}\n", e.what());
        return kExitRuntime;
    }
}

}  // namespace threegroups::cli
