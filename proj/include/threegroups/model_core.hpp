#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <fmt/core.h>

#include "threegroups/error.hpp"
#include "threegroups/matrix.hpp"

namespace threegroups {

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

/// Latent group of a gene. The numeric values are the serialized form.
enum class GeneLabel : std::uint8_t { Null = 1, Deleterious = 2, Beneficial = 3 };

inline constexpr std::array<GeneLabel, 3> kAllLabels{
    GeneLabel::Null, GeneLabel::Deleterious, GeneLabel::Beneficial};

/// Zero-based slot of a label (Null=0, Deleterious=1, Beneficial=2).
constexpr std::size_t label_slot(GeneLabel g) noexcept {
    return static_cast<std::size_t>(g) - 1;
}

constexpr int label_code(GeneLabel g) noexcept { return static_cast<int>(g); }

inline GeneLabel label_from_code(int code) {
    if (code < 1 || code > 3) {
        throw ValidationError(fmt::format("gene label code {} is not in {{1,2,3}}", code));
    }
    return static_cast<GeneLabel>(code);
}

constexpr bool is_null(GeneLabel g) noexcept { return g == GeneLabel::Null; }

/// +1 for Deleterious, -1 for Beneficial, 0 for Null.
constexpr int label_sign(GeneLabel g) noexcept {
    switch (g) {
        case GeneLabel::Deleterious: return 1;
        case GeneLabel::Beneficial: return -1;
        default: return 0;
    }
}

inline const char* label_name(GeneLabel g) noexcept {
    switch (g) {
        case GeneLabel::Deleterious: return "deleterious";
        case GeneLabel::Beneficial: return "beneficial";
        default: return "null";
    }
}

using GroupCounts = std::array<std::size_t, 3>;

/// Labels for J genes with group counts kept in sync.
class LabelVector {
public:
    LabelVector() = default;
    explicit LabelVector(std::size_t n_genes, GeneLabel fill = GeneLabel::Null)
        : labels_(n_genes, fill) {
        counts_[label_slot(fill)] = n_genes;
    }
    explicit LabelVector(std::vector<GeneLabel> labels) : labels_(std::move(labels)) {
        counts_ = recount();
    }

    [[nodiscard]] std::size_t size() const noexcept { return labels_.size(); }
    [[nodiscard]] GeneLabel operator[](std::size_t j) const { return labels_[j]; }
    [[nodiscard]] const GroupCounts& counts() const noexcept { return counts_; }
    [[nodiscard]] std::span<const GeneLabel> labels() const noexcept { return labels_; }
    [[nodiscard]] std::size_t non_null_count() const noexcept {
        return counts_[1] + counts_[2];
    }

    void set(std::size_t j, GeneLabel g) {
        --counts_[label_slot(labels_[j])];
        ++counts_[label_slot(g)];
        labels_[j] = g;
    }

    [[nodiscard]] GroupCounts recount() const {
        GroupCounts c{0, 0, 0};
        for (auto g : labels_) ++c[label_slot(g)];
        return c;
    }

    [[nodiscard]] bool consistent() const { return recount() == counts_; }

    bool operator==(const LabelVector&) const = default;

private:
    std::vector<GeneLabel> labels_;
    GroupCounts counts_{0, 0, 0};
};

/// Group probability vector lambda and its two-stick form.
struct GroupProbabilities {
    std::array<double, 3> lambda{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

    /// v1 = lambda1, v2 = lambda2 / (lambda2 + lambda3).
    static GroupProbabilities from_sticks(double v1, double v2) {
        return {{v1, (1.0 - v1) * v2, (1.0 - v1) * (1.0 - v2)}};
    }

    [[nodiscard]] std::pair<double, double> sticks() const {
        const double rest = lambda[1] + lambda[2];
        return {lambda[0], rest > 0.0 ? lambda[1] / rest : 0.5};
    }

    [[nodiscard]] bool on_simplex(double tol = 1e-12) const {
        double s = 0.0;
        for (double l : lambda) {
            if (l < -tol || l > 1.0 + tol) return false;
            s += l;
        }
        return std::abs(s - 1.0) <= tol;
    }
};

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct RnaSeqDataset {
    Matrix<std::int64_t> counts;            ///< sample x gene
    std::vector<int> treatment;             ///< per sample, 0 = control, 1 = disease
    std::vector<double> log_library_size;   ///< per sample offset
    std::vector<double> log_gene_length;    ///< per gene offset
    Matrix<double> covariates;              ///< sample x covariate
    std::vector<std::string> gene_ids;
    std::vector<std::string> sample_ids;

    [[nodiscard]] std::size_t n_samples() const noexcept { return treatment.size(); }
    [[nodiscard]] std::size_t n_genes() const noexcept { return gene_ids.size(); }
    [[nodiscard]] std::size_t n_covariates() const noexcept { return covariates.cols(); }
};

struct GwasDataset {
    std::vector<int> outcome;               ///< per individual, 1 = case
    Matrix<int> carrier;                    ///< individual x gene, values in {0,1}
    Matrix<double> covariates;              ///< individual x covariate (first column intercept by convention)
    std::vector<std::string> gene_ids;
    std::vector<std::string> individual_ids;

    [[nodiscard]] std::size_t n_individuals() const noexcept { return outcome.size(); }
    [[nodiscard]] std::size_t n_genes() const noexcept { return gene_ids.size(); }
    [[nodiscard]] std::size_t n_covariates() const noexcept { return covariates.cols(); }

    /// True when covariate column 0 is identically one.
    [[nodiscard]] bool has_intercept() const {
        if (covariates.cols() == 0) return false;
        for (std::size_t i = 0; i < covariates.rows(); ++i) {
            if (covariates(i, 0) != 1.0) return false;
        }
        return true;
    }
};

/// A column of ones, for datasets loaded without covariates.
inline Matrix<double> intercept_only(std::size_t n_rows) { return Matrix<double>(n_rows, 1, 1.0); }

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Violation {
    std::string message;
    std::optional<std::size_t> row;
    std::optional<std::size_t> col;
};

using ValidationReport = std::vector<Violation>;

namespace detail {

inline void check_shape(ValidationReport& report, const char* what, std::size_t got,
                        std::size_t want) {
    if (got != want) {
        report.push_back({fmt::format("{} has length {}, expected {}", what, got, want), {}, {}});
    }
}

inline void check_finite_matrix(ValidationReport& report, const char* what,
                                const Matrix<double>& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (!std::isfinite(m(i, c))) {
                report.push_back({fmt::format("{} row {} column {} is not finite", what, i, c), i, c});
            }
        }
    }
}

}  // namespace detail

inline ValidationReport validate_dataset(const RnaSeqDataset& ds) {
    ValidationReport report;
    const std::size_t n = ds.n_samples();
    const std::size_t J = ds.n_genes();
    if (ds.counts.rows() != n || ds.counts.cols() != J) {
        report.push_back({fmt::format("count matrix is {}x{}, expected {}x{} (samples x genes)",
                                      ds.counts.rows(), ds.counts.cols(), n, J),
                          {}, {}});
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < J; ++j) {
                if (ds.counts(i, j) < 0) {
                    report.push_back({fmt::format("negative count at sample row {} gene {}", i,
                                                  ds.gene_ids[j]),
                                      i, j});
                }
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (ds.treatment[i] != 0 && ds.treatment[i] != 1) {
            report.push_back({fmt::format("treatment at row {} is {}, not 0/1", i, ds.treatment[i]), i, {}});
        }
    }
    detail::check_shape(report, "log_library_size", ds.log_library_size.size(), n);
    detail::check_shape(report, "log_gene_length", ds.log_gene_length.size(), J);
    for (std::size_t i = 0; i < ds.log_library_size.size(); ++i) {
        if (!std::isfinite(ds.log_library_size[i])) {
            report.push_back({fmt::format("library-size offset at row {} is not finite", i), i, {}});
        }
    }
    for (std::size_t j = 0; j < ds.log_gene_length.size(); ++j) {
        if (!std::isfinite(ds.log_gene_length[j])) {
            report.push_back({fmt::format("gene-length offset for gene {} is not finite", j), {}, j});
        }
    }
    if (ds.covariates.rows() != n) {
        report.push_back({fmt::format("covariate matrix has {} rows, expected {}",
                                      ds.covariates.rows(), n),
                          {}, {}});
    }
    detail::check_finite_matrix(report, "covariate", ds.covariates);
    return report;
}

inline ValidationReport validate_dataset(const GwasDataset& ds) {
    ValidationReport report;
    const std::size_t n = ds.n_individuals();
    const std::size_t J = ds.n_genes();
    for (std::size_t i = 0; i < n; ++i) {
        if (ds.outcome[i] != 0 && ds.outcome[i] != 1) {
            report.push_back({fmt::format("outcome at row {} is {}, not 0/1", i, ds.outcome[i]), i, {}});
        }
    }
    if (ds.carrier.rows() != n || ds.carrier.cols() != J) {
        report.push_back({fmt::format("carrier matrix is {}x{}, expected {}x{} (individuals x genes)",
                                      ds.carrier.rows(), ds.carrier.cols(), n, J),
                          {}, {}});
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < J; ++j) {
                const int z = ds.carrier(i, j);
                if (z != 0 && z != 1) {
                    report.push_back({fmt::format("carrier value {} at row {} gene {} is not 0/1", z,
                                                  i, ds.gene_ids[j]),
                                      i, j});
                }
            }
        }
    }
    if (ds.covariates.rows() != n) {
        report.push_back({fmt::format("covariate matrix has {} rows, expected {}",
                                      ds.covariates.rows(), n),
                          {}, {}});
    }
    detail::check_finite_matrix(report, "covariate", ds.covariates);
    return report;
}

// ---------------------------------------------------------------------------
// Gene alignment
// ---------------------------------------------------------------------------

inline constexpr std::ptrdiff_t kAbsent = -1;

/// Union of the gene sets of both modalities, in first-seen order (RNA first).
struct GeneAlignment {
    std::vector<std::string> union_ids;
    std::vector<std::ptrdiff_t> rna_column;   ///< union index -> RNA dataset column or kAbsent
    std::vector<std::ptrdiff_t> gwas_column;  ///< union index -> GWAS dataset column or kAbsent
    std::vector<std::size_t> rna_to_union;
    std::vector<std::size_t> gwas_to_union;

    [[nodiscard]] std::size_t size() const noexcept { return union_ids.size(); }
    [[nodiscard]] bool in_rna(std::size_t j) const { return rna_column[j] != kAbsent; }
    [[nodiscard]] bool in_gwas(std::size_t j) const { return gwas_column[j] != kAbsent; }
};

inline GeneAlignment align_genes(std::span<const std::string> rna_ids,
                                 std::span<const std::string> gwas_ids) {
    GeneAlignment out;
    std::unordered_map<std::string, std::size_t> index;

    auto add = [&](std::span<const std::string> ids, const char* modality,
                   std::vector<std::size_t>& to_union) {
        std::unordered_map<std::string, bool> seen;
        for (const auto& id : ids) {
            if (!seen.emplace(id, true).second) {
                throw ValidationError(fmt::format("duplicate gene id '{}' in {} gene list", id, modality));
            }
            auto [it, inserted] = index.emplace(id, out.union_ids.size());
            if (inserted) out.union_ids.push_back(id);
            to_union.push_back(it->second);
        }
    };
    add(rna_ids, "RNA-seq", out.rna_to_union);
    add(gwas_ids, "GWAS", out.gwas_to_union);

    out.rna_column.assign(out.union_ids.size(), kAbsent);
    out.gwas_column.assign(out.union_ids.size(), kAbsent);
    for (std::size_t c = 0; c < out.rna_to_union.size(); ++c) {
        out.rna_column[out.rna_to_union[c]] = static_cast<std::ptrdiff_t>(c);
    }
    for (std::size_t c = 0; c < out.gwas_to_union.size(); ++c) {
        out.gwas_column[out.gwas_to_union[c]] = static_cast<std::ptrdiff_t>(c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// SNV collapse
// ---------------------------------------------------------------------------

struct CarrierMatrix {
    std::vector<std::string> gene_ids;   ///< first-seen order in the variant map
    Matrix<int> carrier;                 ///< individual x gene
    std::size_t dropped_variants = 0;    ///< genotype columns with no gene mapping
};

/// Dominant-coded gene carriers: carrier(i, g) = 1 iff individual i carries at
/// least one minor allele at a variant mapped to g.
inline CarrierMatrix collapse_snvs(
    std::span<const std::pair<std::string, std::string>> variant_gene_map,
    std::span<const std::string> variant_ids, const Matrix<int>& genotypes) {
    if (genotypes.cols() != variant_ids.size()) {
        throw ValidationError(fmt::format("genotype matrix has {} columns but {} variant ids",
                                          genotypes.cols(), variant_ids.size()));
    }
    CarrierMatrix out;
    std::unordered_map<std::string, std::size_t> gene_index;
    std::unordered_map<std::string, std::vector<std::size_t>> genes_of_variant;
    for (const auto& [variant, gene] : variant_gene_map) {
        auto [it, inserted] = gene_index.emplace(gene, out.gene_ids.size());
        if (inserted) out.gene_ids.push_back(gene);
        auto& targets = genes_of_variant[variant];
        if (std::find(targets.begin(), targets.end(), it->second) == targets.end()) {
            targets.push_back(it->second);
        }
    }

    const std::size_t n = genotypes.rows();
    out.carrier = Matrix<int>(n, out.gene_ids.size(), 0);
    for (std::size_t v = 0; v < variant_ids.size(); ++v) {
        for (std::size_t i = 0; i < n; ++i) {
            const int g = genotypes(i, v);
            if (g < 0 || g > 2) {
                throw ValidationError(fmt::format("genotype {} for variant '{}' at row {} is not in {{0,1,2}}",
                                                  g, variant_ids[v], i));
            }
        }
        auto it = genes_of_variant.find(variant_ids[v]);
        if (it == genes_of_variant.end()) {
            ++out.dropped_variants;
            continue;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (genotypes(i, v) == 0) continue;
            for (std::size_t g : it->second) out.carrier(i, g) = 1;
        }
    }
    return out;
}

}  // namespace threegroups
