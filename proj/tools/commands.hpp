#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "threegroups/config.hpp"
#include "threegroups/priors.hpp"
#include "threegroups/simgen.hpp"

namespace threegroups::cli {

enum ExitCode : int { kExitOk = 0, kExitValidation = 2, kExitRuntime = 3 };

/// Fully resolved settings for one invocation.
struct RunConfig {
    std::string command;
    std::uint64_t seed = 1;
    ModalitySet modalities;
    PriorConfig prior;
    std::size_t iters = 20000;
    std::size_t burnin = 10000;
    bool burnin_given = false;
    std::size_t thin = 1;
    std::size_t chains = 1;
    std::size_t workers = 1;
    std::size_t checkpoint = 1000;
    bool write_trace = true;
    std::string out;
    bool force = false;
    bool max_ram_estimate = false;

    SimConfig sim;
    std::size_t reps = 1;

    std::string rna_counts, rna_samples, rna_genes, rna_covariates;
    std::string gwas_carriers, gwas_phenotype, gwas_covariates, gwas_genotypes, variant_map;
    std::string archive;
    std::optional<std::vector<std::size_t>> replicates;  ///< unset means all

    std::vector<std::pair<std::string, std::string>> models;  ///< name, fit output directory
    std::vector<double> fpr_targets{0.01, 0.05};

    std::vector<std::string> traces;
    std::optional<std::size_t> curve_genes;

    std::string config_hash;  ///< over every output-affecting key
};

/// Every recognized configuration key.
const std::vector<std::string>& known_keys();

/// Typed view of a key=value configuration; unknown keys are rejected.
RunConfig resolve(const std::string& command, const KeyValueConfig& kv);

/// Hash of the canonical key=value listing, leaving out keys that cannot
/// change any output (paths of the output directory, worker count, flags).
std::string config_hash(const KeyValueConfig& kv);

/// Bytes of state a fit is expected to hold, for the preflight estimate.
std::size_t estimate_fit_bytes(std::size_t n_rna, std::size_t genes_rna, std::size_t n_gwas,
                               std::size_t genes_gwas, std::size_t iters, std::size_t chains);

int cmd_simulate(const RunConfig& cfg);
int cmd_fit(const RunConfig& cfg);
int cmd_score(const RunConfig& cfg);
int cmd_summarize(const RunConfig& cfg);

/// Parse argv, dispatch, and map failures to exit codes.
int run(int argc, char** argv);

}  // namespace threegroups::cli
