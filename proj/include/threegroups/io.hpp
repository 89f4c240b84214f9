#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <fmt/core.h>
#include <json.hpp>

#include "threegroups/config.hpp"
#include "threegroups/error.hpp"
#include "threegroups/model_core.hpp"
#include "threegroups/sampler.hpp"
#include "threegroups/simgen.hpp"
#include "threegroups/summary.hpp"

namespace threegroups {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kMissing = "NA";

/// Comma for .csv files, tab otherwise.
inline char delimiter_for(const fs::path& path) { return path.extension() == ".csv" ? ',' : '\t'; }

inline std::string header_line(std::string_view kind, std::string_view config_hash) {
    return fmt::format("# threegroups kind={} schema={} config={}", kind, kSchemaVersion, config_hash);
}

inline std::string format_double(double v) { return fmt::format("{}", v); }
inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : kMissing; }

// ---------------------------------------------------------------------------
// Delimited tables
// ---------------------------------------------------------------------------

struct Table {
    fs::path path;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] std::size_t column(std::string_view name) const {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (header[c] == name) return c;
        }
        throw ValidationError(fmt::format("{}: missing column '{}'", path.string(), name));
    }
    [[nodiscard]] std::optional<std::size_t> find_column(std::string_view name) const {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (header[c] == name) return c;
        }
        return std::nullopt;
    }
};

/// Lines starting with '#' are skipped; the first remaining line is the header.
inline Table read_table(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
    const char delim = delimiter_for(path);
    Table t;
    t.path = path;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split(line, delim);
        for (auto& f : fields) f = trim(f);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw ValidationError(fmt::format("{}:{}: expected {} fields, found {}", path.string(), lineno,
                                              t.header.size(), fields.size()));
        }
        for (const auto& f : fields) {
            if (f.empty() || f == kMissing) {
                throw ValidationError(fmt::format("{}:{}: missing value", path.string(), lineno));
            }
        }
        t.rows.push_back(std::move(fields));
    }
    if (t.header.empty()) throw ValidationError(fmt::format("{}: no header row", path.string()));
    return t;
}

/// Like read_table but "NA" cells are allowed (summary and truth files).
inline Table read_table_allow_missing(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
    const char delim = delimiter_for(path);
    Table t;
    t.path = path;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split(line, delim);
        if (t.header.empty()) {
            t.header = std::move(fields);
        } else {
            if (fields.size() != t.header.size()) {
                throw ValidationError(fmt::format("{}: ragged row", path.string()));
            }
            t.rows.push_back(std::move(fields));
        }
    }
    if (t.header.empty()) throw ValidationError(fmt::format("{}: no header row", path.string()));
    return t;
}

class TableWriter {
public:
    TableWriter(const fs::path& path, std::string_view kind, std::string_view config_hash,
                const std::vector<std::string>& header)
        : path_(path), out_(path), delim_(delimiter_for(path)) {
        if (!out_) throw RuntimeAbort(fmt::format("cannot write '{}'", path.string()));
        out_ << header_line(kind, config_hash) << '\n';
        row(header);
    }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i > 0) out_ << delim_;
            out_ << fields[i];
        }
        out_ << '\n';
        if (!out_) throw RuntimeAbort(fmt::format("write failed for '{}'", path_.string()));
    }

private:
    fs::path path_;
    std::ofstream out_;
    char delim_;
};

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

inline void throw_if_invalid(const ValidationReport& report, std::string_view what) {
    if (report.empty()) return;
    std::string msg = fmt::format("{} failed validation ({} problems):", what, report.size());
    for (std::size_t i = 0; i < report.size() && i < 10; ++i) msg += "\n  " + report[i].message;
    throw ValidationError(msg);
}

namespace detail {

inline std::unordered_map<std::string, std::size_t> index_rows(const Table& t, std::size_t key_col) {
    std::unordered_map<std::string, std::size_t> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (!out.emplace(t.rows[r][key_col], r).second) {
            throw ValidationError(fmt::format("{}: duplicate id '{}'", t.path.string(), t.rows[r][key_col]));
        }
    }
    return out;
}

inline std::size_t lookup(const std::unordered_map<std::string, std::size_t>& index, const std::string& id,
                          const fs::path& where) {
    const auto it = index.find(id);
    if (it == index.end()) throw ValidationError(fmt::format("{}: no row for id '{}'", where.string(), id));
    return it->second;
}

/// Rows of `t` keyed by its first column, as a numeric matrix in `ids` order.
inline Matrix<double> covariate_matrix(const Table& t, const std::vector<std::string>& ids) {
    const auto index = index_rows(t, 0);
    Matrix<double> out(ids.size(), t.header.size() - 1);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto& row = t.rows[lookup(index, ids[i], t.path)];
        for (std::size_t c = 1; c < row.size(); ++c) {
            out(i, c - 1) = parse_number<double>(row[c], t.path.string());
        }
    }
    return out;
}

}  // namespace detail

struct RnaPaths {
    fs::path counts;      ///< gene_id then one column per sample
    fs::path samples;     ///< sample_id, treatment, log_library_size
    fs::path genes;       ///< gene_id, log_gene_length (optional)
    fs::path covariates;  ///< sample_id then covariates (optional)
};

struct GwasPaths {
    fs::path carriers;       ///< individual_id then one column per gene
    fs::path phenotype;      ///< individual_id, outcome
    fs::path covariates;     ///< individual_id then covariates (optional; intercept added when absent)
    fs::path genotypes;      ///< individual_id then one column per variant (alternative to carriers)
    fs::path variant_map;    ///< variant_id, gene_id
};

inline RnaSeqDataset read_rna_dataset(const RnaPaths& p) {
    const Table counts = read_table(p.counts);
    const Table samples = read_table(p.samples);
    RnaSeqDataset ds;
    ds.sample_ids.assign(counts.header.begin() + 1, counts.header.end());
    const std::size_t n = ds.sample_ids.size();
    const std::size_t J = counts.rows.size();
    ds.counts = Matrix<std::int64_t>(n, J);
    for (std::size_t j = 0; j < J; ++j) {
        ds.gene_ids.push_back(counts.rows[j][0]);
        for (std::size_t i = 0; i < n; ++i) {
            ds.counts(i, j) = parse_number<std::int64_t>(counts.rows[j][i + 1], p.counts.string());
        }
    }
    const auto sidx = detail::index_rows(samples, samples.column("sample_id"));
    const auto tcol = samples.column("treatment");
    const auto lcol = samples.column("log_library_size");
    for (const auto& id : ds.sample_ids) {
        const auto& row = samples.rows[detail::lookup(sidx, id, p.samples)];
        ds.treatment.push_back(parse_number<int>(row[tcol], p.samples.string()));
        ds.log_library_size.push_back(parse_number<double>(row[lcol], p.samples.string()));
    }
    ds.log_gene_length.assign(J, 0.0);
    if (!p.genes.empty()) {
        const Table genes = read_table(p.genes);
        const auto gidx = detail::index_rows(genes, genes.column("gene_id"));
        const auto mcol = genes.column("log_gene_length");
        for (std::size_t j = 0; j < J; ++j) {
            ds.log_gene_length[j] =
                parse_number<double>(genes.rows[detail::lookup(gidx, ds.gene_ids[j], p.genes)][mcol], p.genes.string());
        }
    }
    ds.covariates = p.covariates.empty() ? Matrix<double>(n, 0)
                                         : detail::covariate_matrix(read_table(p.covariates), ds.sample_ids);
    throw_if_invalid(validate_dataset(ds), p.counts.string());
    return ds;
}

inline GwasDataset read_gwas_dataset(const GwasPaths& p) {
    GwasDataset ds;
    if (!p.carriers.empty()) {
        const Table carriers = read_table(p.carriers);
        ds.gene_ids.assign(carriers.header.begin() + 1, carriers.header.end());
        ds.carrier = Matrix<int>(carriers.rows.size(), ds.gene_ids.size());
        for (std::size_t i = 0; i < carriers.rows.size(); ++i) {
            ds.individual_ids.push_back(carriers.rows[i][0]);
            for (std::size_t j = 0; j < ds.gene_ids.size(); ++j) {
                ds.carrier(i, j) = parse_number<int>(carriers.rows[i][j + 1], p.carriers.string());
            }
        }
    } else if (!p.genotypes.empty() && !p.variant_map.empty()) {
        const Table geno = read_table(p.genotypes);
        const Table vmap = read_table(p.variant_map);
        std::vector<std::string> variant_ids(geno.header.begin() + 1, geno.header.end());
        Matrix<int> g(geno.rows.size(), variant_ids.size());
        for (std::size_t i = 0; i < geno.rows.size(); ++i) {
            ds.individual_ids.push_back(geno.rows[i][0]);
            for (std::size_t v = 0; v < variant_ids.size(); ++v) {
                g(i, v) = parse_number<int>(geno.rows[i][v + 1], p.genotypes.string());
            }
        }
        std::vector<std::pair<std::string, std::string>> map;
        for (const auto& row : vmap.rows) map.emplace_back(row[0], row[1]);
        auto collapsed = collapse_snvs(map, variant_ids, g);
        if (collapsed.dropped_variants > 0) {
            fmt::print(stderr, "warning: {} variants without a gene mapping were dropped\n",
                       collapsed.dropped_variants);
        }
        ds.gene_ids = std::move(collapsed.gene_ids);
        ds.carrier = std::move(collapsed.carrier);
    } else {
        throw ValidationError("GWAS input needs a carrier matrix or genotypes plus a variant map");
    }
    const Table pheno = read_table(p.phenotype);
    const auto pidx = detail::index_rows(pheno, pheno.column("individual_id"));
    const auto ocol = pheno.column("outcome");
    for (const auto& id : ds.individual_ids) {
        ds.outcome.push_back(parse_number<int>(pheno.rows[detail::lookup(pidx, id, p.phenotype)][ocol],
                                               p.phenotype.string()));
    }
    ds.covariates = p.covariates.empty() ? intercept_only(ds.individual_ids.size())
                                         : detail::covariate_matrix(read_table(p.covariates), ds.individual_ids);
    throw_if_invalid(validate_dataset(ds), p.phenotype.string());
    return ds;
}

/// Counts-only matrix (genes as rows) returned sample x gene, for thinning.
inline std::pair<Matrix<std::int64_t>, std::vector<std::string>> read_count_matrix(const fs::path& path) {
    const Table t = read_table(path);
    const std::size_t n = t.header.size() - 1;
    Matrix<std::int64_t> m(n, t.rows.size());
    std::vector<std::string> ids;
    for (std::size_t j = 0; j < t.rows.size(); ++j) {
        ids.push_back(t.rows[j][0]);
        for (std::size_t i = 0; i < n; ++i) {
            const auto y = parse_number<std::int64_t>(t.rows[j][i + 1], path.string());
            if (y < 0) throw ValidationError(fmt::format("{}: negative count", path.string()));
            m(i, j) = y;
        }
    }
    return {std::move(m), std::move(ids)};
}

inline void write_rna_dataset(const fs::path& dir, const RnaSeqDataset& ds, std::string_view hash) {
    {
        std::vector<std::string> header{"gene_id"};
        header.insert(header.end(), ds.sample_ids.begin(), ds.sample_ids.end());
        TableWriter w(dir / "rna_counts.tsv", "rna_counts", hash, header);
        for (std::size_t j = 0; j < ds.n_genes(); ++j) {
            std::vector<std::string> row{ds.gene_ids[j]};
            for (std::size_t i = 0; i < ds.n_samples(); ++i) row.push_back(std::to_string(ds.counts(i, j)));
            w.row(row);
        }
    }
    {
        TableWriter w(dir / "rna_samples.tsv", "rna_samples", hash, {"sample_id", "treatment", "log_library_size"});
        for (std::size_t i = 0; i < ds.n_samples(); ++i) {
            w.row({ds.sample_ids[i], std::to_string(ds.treatment[i]), format_double(ds.log_library_size[i])});
        }
    }
    {
        TableWriter w(dir / "rna_genes.tsv", "rna_genes", hash, {"gene_id", "log_gene_length"});
        for (std::size_t j = 0; j < ds.n_genes(); ++j) {
            w.row({ds.gene_ids[j], format_double(ds.log_gene_length[j])});
        }
    }
}

inline void write_gwas_dataset(const fs::path& dir, const GwasDataset& ds, std::string_view hash) {
    {
        std::vector<std::string> header{"individual_id"};
        header.insert(header.end(), ds.gene_ids.begin(), ds.gene_ids.end());
        TableWriter w(dir / "gwas_carriers.tsv", "gwas_carriers", hash, header);
        for (std::size_t i = 0; i < ds.n_individuals(); ++i) {
            std::vector<std::string> row{ds.individual_ids[i]};
            for (std::size_t j = 0; j < ds.n_genes(); ++j) row.push_back(std::to_string(ds.carrier(i, j)));
            w.row(row);
        }
    }
    TableWriter w(dir / "gwas_phenotype.tsv", "gwas_phenotype", hash, {"individual_id", "outcome"});
    for (std::size_t i = 0; i < ds.n_individuals(); ++i) {
        w.row({ds.individual_ids[i], std::to_string(ds.outcome[i])});
    }
}

inline void write_truth(const fs::path& path, const SimTruth& t, std::string_view hash) {
    TableWriter w(path, "truth", hash, {"gene_id", "label", "gwas_effect", "rna_log_fc"});
    for (std::size_t j = 0; j < t.gene_ids.size(); ++j) {
        w.row({t.gene_ids[j], std::to_string(label_code(t.labels[j])), format_double(t.gwas_effect[j]),
               format_double(t.rna_log_fc[j])});
    }
}

inline SimTruth read_truth(const fs::path& path) {
    const Table t = read_table(path);
    const auto lcol = t.column("label");
    const auto gcol = t.column("gwas_effect");
    const auto rcol = t.column("rna_log_fc");
    SimTruth out;
    std::vector<GeneLabel> labels;
    for (const auto& row : t.rows) {
        out.gene_ids.push_back(row[0]);
        labels.push_back(label_from_code(parse_number<int>(row[lcol], path.string())));
        out.gwas_effect.push_back(parse_number<double>(row[gcol], path.string()));
        out.rna_log_fc.push_back(parse_number<double>(row[rcol], path.string()));
    }
    out.labels = LabelVector(std::move(labels));
    return out;
}

// ---------------------------------------------------------------------------
// Output directories and archives
// ---------------------------------------------------------------------------

/// Create `dir`; refuse to reuse a non-empty directory unless `force`.
inline void prepare_output_dir(const fs::path& dir, bool force) {
    if (dir.empty()) throw ValidationError("no output directory given (--out)");
    std::error_code ec;
    if (fs::exists(dir, ec)) {
        if (!fs::is_directory(dir, ec)) {
            throw ValidationError(fmt::format("output path '{}' exists and is not a directory", dir.string()));
        }
        if (!fs::is_empty(dir, ec) && !force) {
            throw ValidationError(
                fmt::format("output directory '{}' is not empty; pass --force to overwrite", dir.string()));
        }
    }
    fs::create_directories(dir, ec);
    if (ec) throw RuntimeAbort(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
}

inline std::string replicate_dir_name(std::size_t r) { return fmt::format("rep_{:03d}", r); }

inline void write_replicate(const fs::path& dir, const Replicate& rep, std::string_view hash) {
    fs::create_directories(dir);
    write_rna_dataset(dir, rep.rna, hash);
    write_gwas_dataset(dir, rep.gwas, hash);
    write_truth(dir / "truth.tsv", rep.truth, hash);
}

inline void write_manifest(const fs::path& root, const std::vector<Replicate>& reps, std::string_view hash) {
    TableWriter w(root / "manifest.tsv", "manifest", hash, {"replicate", "directory", "seed", "n_genes", "n_non_null"});
    for (const auto& rep : reps) {
        w.row({std::to_string(rep.index), replicate_dir_name(rep.index), std::to_string(rep.seed),
               std::to_string(rep.truth.gene_ids.size()), std::to_string(rep.truth.labels.non_null_count())});
    }
}

struct ManifestEntry {
    std::size_t replicate = 0;
    fs::path directory;
};

inline std::vector<ManifestEntry> read_manifest(const fs::path& root) {
    const Table t = read_table(root / "manifest.tsv");
    const auto rcol = t.column("replicate");
    const auto dcol = t.column("directory");
    std::vector<ManifestEntry> out;
    for (const auto& row : t.rows) {
        out.push_back({parse_number<std::size_t>(row[rcol], t.path.string()), root / row[dcol]});
    }
    return out;
}

inline RnaPaths replicate_rna_paths(const fs::path& dir) {
    return {dir / "rna_counts.tsv", dir / "rna_samples.tsv", dir / "rna_genes.tsv", {}};
}

inline GwasPaths replicate_gwas_paths(const fs::path& dir) {
    return {dir / "gwas_carriers.tsv", dir / "gwas_phenotype.tsv", {}, {}, {}};
}

// ---------------------------------------------------------------------------
// Posterior summaries
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& summary_columns() {
    static const std::vector<std::string> cols{
        "gene_id",    "in_rna",        "in_gwas",      "p_null",     "p_ben",       "p_del",
        "odds_ratio", "fold_change",   "gwas_effect",  "rna_log_fc", "gwas_marginal", "rna_marginal",
        "dispersion", "mostly_null",   "mm_selected",  "mm_label"};
    return cols;
}

/// Per-gene report: occupancy, conditional effects (exponentiated and on the
/// log scale), marginal effects, dispersion and median-probability calls.
/// Conditional effects print "*" for genes null in more than 99% of
/// iterations and NA for modalities that do not measure the gene.
inline void write_summary(const fs::path& path, const PosteriorSummary& s, std::string_view hash) {
    TableWriter w(path, "summary", hash, summary_columns());
    auto conditional = [](bool present, bool mostly_null, const std::optional<double>& v) -> std::string {
        if (!present) return kMissing;
        if (mostly_null || !v) return "*";
        return format_double(*v);
    };
    for (const auto& g : s.genes) {
        const bool mm = g.p_null < 0.5;
        w.row({g.gene_id, g.in_rna ? "1" : "0", g.in_gwas ? "1" : "0", format_double(g.p_null),
               format_double(g.p_ben), format_double(g.p_del), conditional(g.in_gwas, g.mostly_null(), g.odds_ratio()),
               conditional(g.in_rna, g.mostly_null(), g.fold_change()),
               conditional(g.in_gwas, g.mostly_null(), g.gwas_conditional),
               conditional(g.in_rna, g.mostly_null(), g.rna_conditional), format_optional(g.gwas_marginal),
               format_optional(g.rna_marginal), format_optional(g.dispersion), g.mostly_null() ? "1" : "0",
               mm ? "1" : "0", mm ? label_name(g.p_ben > g.p_del ? GeneLabel::Beneficial : GeneLabel::Deleterious) : kMissing});
    }
}

/// Occupancy columns of a summary file.
struct SummaryRow {
    std::string gene_id;
    double p_null = 1.0;
    double p_ben = 0.0;
    double p_del = 0.0;
};

inline std::vector<SummaryRow> read_summary(const fs::path& path) {
    const Table t = read_table_allow_missing(path);
    const auto n = t.column("p_null");
    const auto b = t.column("p_ben");
    const auto d = t.column("p_del");
    std::vector<SummaryRow> out;
    for (const auto& row : t.rows) {
        out.push_back({row[0], parse_number<double>(row[n], path.string()), parse_number<double>(row[b], path.string()),
                       parse_number<double>(row[d], path.string())});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Trace stream (one JSON object per line)
// ---------------------------------------------------------------------------

inline std::string encode_labels(std::span<const GeneLabel> labels) {
    std::string s;
    s.reserve(labels.size());
    for (auto g : labels) s.push_back(static_cast<char>('0' + label_code(g)));
    return s;
}

inline std::string encode_bits(const std::vector<char>& bits) {
    std::string s;
    for (char b : bits) s.push_back(b != 0 ? '1' : '0');
    return s;
}

inline std::vector<char> decode_bits(std::string_view s) {
    std::vector<char> out;
    for (char c : s) out.push_back(c == '1' ? 1 : 0);
    return out;
}

inline nlohmann::json hyper_to_json(const HyperState& h) {
    nlohmann::json j;
    j["mu0"] = h.mu0;
    j["tau0"] = h.tau0;
    for (auto m : kAllModalities) {
        for (auto s : kAllSigns) {
            const auto& slab = h.at(m, s);
            j[fmt::format("{}_{}", modality_name(m), s == Sign::Positive ? "pos" : "neg")] = {slab.tau, slab.mu,
                                                                                             slab.sigma};
        }
    }
    return j;
}

inline HyperState hyper_from_json(const nlohmann::json& j) {
    HyperState h;
    h.mu0 = j.at("mu0").get<double>();
    h.tau0 = j.at("tau0").get<double>();
    for (auto m : kAllModalities) {
        for (auto s : kAllSigns) {
            const auto& v = j.at(fmt::format("{}_{}", modality_name(m), s == Sign::Positive ? "pos" : "neg"));
            h.at(m, s) = {v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()};
        }
    }
    return h;
}

inline nlohmann::json prior_to_json(const PriorConfig& p) {
    return {{"family", family_name(p.family)},
            {"kappa", p.dirichlet.kappa},
            {"a", p.dirichlet.a},
            {"r", p.r},
            {"local_scale", p.local_scale},
            {"fixed_tau", p.fixed_tau},
            {"hyper_tau", p.hyper_tau},
            {"hyper_r", p.hyper_r},
            {"invgamma_shape", p.invgamma_shape},
            {"invgamma_scale", p.invgamma_scale},
            {"local_mu_shape", p.local_mu_shape},
            {"local_mu_scale", p.local_mu_scale},
            {"halft_nu", p.halft_nu},
            {"halft_scale", p.halft_scale},
            {"mu0_precision", p.mu0_precision},
            {"nuisance_precision", p.nuisance_precision}};
}

inline PriorConfig prior_from_json(const nlohmann::json& j) {
    PriorConfig p;
    p.family = parse_family(j.at("family").get<std::string>());
    p.dirichlet.kappa = j.at("kappa").get<double>();
    p.dirichlet.a = j.at("a").get<std::array<double, 3>>();
    p.r = j.at("r").get<double>();
    p.local_scale = j.at("local_scale").get<double>();
    p.fixed_tau = j.at("fixed_tau").get<double>();
    p.hyper_tau = j.at("hyper_tau").get<double>();
    p.hyper_r = j.at("hyper_r").get<double>();
    p.invgamma_shape = j.at("invgamma_shape").get<double>();
    p.invgamma_scale = j.at("invgamma_scale").get<double>();
    p.local_mu_shape = j.at("local_mu_shape").get<double>();
    p.local_mu_scale = j.at("local_mu_scale").get<double>();
    p.halft_nu = j.at("halft_nu").get<double>();
    p.halft_scale = j.at("halft_scale").get<double>();
    p.mu0_precision = j.at("mu0_precision").get<double>();
    p.nuisance_precision = j.at("nuisance_precision").get<double>();
    return p;
}

inline nlohmann::json trace_header_json(const Trace& t, std::string_view hash) {
    return {{"type", "header"},
            {"schema", kSchemaVersion},
            {"config", hash},
            {"genes", t.gene_ids},
            {"in_rna", encode_bits(t.in_rna)},
            {"in_gwas", encode_bits(t.in_gwas)},
            {"modality", modality_set_name(t.modalities)},
            {"prior", prior_to_json(t.prior)},
            {"burn_in", t.burn_in},
            {"n_iter", t.n_iter},
            {"seed", t.seed},
            {"chain", t.chain_id}};
}

inline nlohmann::json record_json(const TraceRecord& r) {
    nlohmann::json j{{"type", "iter"}, {"t", r.iteration}, {"labels", encode_labels(r.labels)}};
    if (!r.rna_effects.empty()) j["rna"] = r.rna_effects;
    if (!r.gwas_effects.empty()) j["gwas"] = r.gwas_effects;
    if (!r.log_phi.empty()) j["log_phi"] = r.log_phi;
    j["lambda"] = r.lambda;
    j["hyper"] = hyper_to_json(r.hyper);
    j["log_post"] = r.log_posterior;
    return j;
}

inline nlohmann::json trace_footer_json(const Trace& t) {
    nlohmann::json acc = nlohmann::json::object();
    for (const auto& [name, a] : t.acceptance) acc[name] = {a.accepted, a.proposed};
    nlohmann::json cps = nlohmann::json::array();
    for (const auto& c : t.checkpoints) cps.push_back({c.iteration, c.incremental, c.recomputed});
    return {{"type", "footer"},
            {"retained", t.retained},
            {"acceptance", acc},
            {"checkpoints", cps},
            {"clamped_exponents", t.numeric.clamped_exponents}};
}

inline void write_trace(const fs::path& path, const Trace& t, std::string_view hash) {
    std::ofstream out(path);
    if (!out) throw RuntimeAbort(fmt::format("cannot write '{}'", path.string()));
    out << trace_header_json(t, hash).dump() << '\n';
    for (const auto& r : t.records) out << record_json(r).dump() << '\n';
    out << trace_footer_json(t).dump() << '\n';
    if (!out) throw RuntimeAbort(fmt::format("write failed for '{}'", path.string()));
}

struct LoadedTrace {
    Trace trace;
    std::string config_hash;
    bool complete = false;  ///< footer present
    std::size_t bad_lines = 0;
};

/// Read a trace stream. A missing footer or an unparsable tail marks the
/// trace incomplete; all intact records are kept.
inline LoadedTrace read_trace(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(fmt::format("cannot open trace '{}'", path.string()));
    LoadedTrace out;
    Trace& t = out.trace;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            ++out.bad_lines;
            continue;
        }
        const auto type = j.value("type", "");
        if (type == "header") {
            t.gene_ids = j.at("genes").get<std::vector<std::string>>();
            t.in_rna = decode_bits(j.at("in_rna").get<std::string>());
            t.in_gwas = decode_bits(j.at("in_gwas").get<std::string>());
            t.modalities = parse_modality_set(j.at("modality").get<std::string>());
            t.prior = prior_from_json(j.at("prior"));
            t.burn_in = j.at("burn_in").get<std::size_t>();
            t.n_iter = j.at("n_iter").get<std::size_t>();
            t.seed = j.at("seed").get<std::uint64_t>();
            t.chain_id = j.at("chain").get<std::uint64_t>();
            out.config_hash = j.at("config").get<std::string>();
            have_header = true;
        } else if (type == "iter" && have_header) {
            TraceRecord r;
            r.iteration = j.at("t").get<std::size_t>();
            const auto labels = j.at("labels").get<std::string>();
            if (labels.size() != t.gene_ids.size()) {
                ++out.bad_lines;
                continue;
            }
            for (char c : labels) r.labels.push_back(label_from_code(c - '0'));
            if (j.contains("rna")) r.rna_effects = j["rna"].get<SparseEffects>();
            if (j.contains("gwas")) r.gwas_effects = j["gwas"].get<SparseEffects>();
            if (j.contains("log_phi")) r.log_phi = j["log_phi"].get<std::vector<double>>();
            r.lambda = j.at("lambda").get<std::array<double, 3>>();
            r.hyper = hyper_from_json(j.at("hyper"));
            r.log_posterior = j.at("log_post").get<double>();
            t.records.push_back(std::move(r));
        } else if (type == "footer") {
            t.retained = j.at("retained").get<std::size_t>();
            for (const auto& [name, v] : j.at("acceptance").items()) {
                t.acceptance[name] = {v.at(1).get<std::size_t>(), v.at(0).get<std::size_t>()};
            }
            for (const auto& c : j.at("checkpoints")) {
                t.checkpoints.push_back({c.at(0).get<std::size_t>(), c.at(1).get<double>(), c.at(2).get<double>()});
            }
            t.numeric.clamped_exponents = j.at("clamped_exponents").get<std::size_t>();
            out.complete = true;
        }
    }
    if (!have_header) throw ValidationError(fmt::format("'{}' has no trace header", path.string()));
    return out;
}

}  // namespace threegroups
