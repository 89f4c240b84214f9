#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <unistd.h>

#include "commands.hpp"
#include "threegroups/io.hpp"
#include "threegroups/sampler.hpp"

using namespace threegroups;

namespace {

int cli_run(std::vector<std::string> args) {
    args.insert(args.begin(), "threegroups");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Workspace : public ::testing::Test {
protected:
    void SetUp() override {
        root_ = fs::temp_directory_path() /
                fmt::format("threegroups_io_{}_{}", ::getpid(),
                            ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(root_);
        fs::create_directories(root_);
    }
    void TearDown() override { fs::remove_all(root_); }

    int simulate(const fs::path& out, std::vector<std::string> extra = {}) {
        std::vector<std::string> args{"simulate", "--seed",         "3", "--set", "genes=8", "--set", "reps=2",
                                      "--set",    "n_gwas=120",     "--set", "n_rna=12", "--out", out.string()};
        args.insert(args.end(), extra.begin(), extra.end());
        return cli_run(args);
    }

    fs::path root_;
};

KeyValueConfig parse_text(const std::string& text) {
    std::istringstream in(text);
    return KeyValueConfig::parse(in);
}

}  // namespace

TEST(Config, ParsesCommentsAndWhitespace) {
    const auto kv = parse_text("# header\n  seed = 7  \n\nfamily=local-hyper # trailing\n");
    EXPECT_EQ(kv.get("seed"), "7");
    EXPECT_EQ(kv.get("family"), "local-hyper");
    EXPECT_FALSE(kv.has("header"));
    EXPECT_THROW(parse_text("seed 7\n"), ValidationError);
    EXPECT_THROW(parse_text("= 7\n"), ValidationError);
}

TEST(Config, ResolveTypesAndRejectsUnknownKeys) {
    auto kv = parse_text("seed=11\nmodality=gwas\nfamily=nonlocal-invgamma\niters=500\nchains=3\n");
    const auto cfg = cli::resolve("fit", kv);
    EXPECT_EQ(cfg.seed, 11u);
    EXPECT_TRUE(cfg.modalities.gwas);
    EXPECT_FALSE(cfg.modalities.rna);
    EXPECT_EQ(cfg.prior.family, PriorFamily::NonlocalInvGammaHyper);
    EXPECT_EQ(cfg.iters, 500u);
    EXPECT_EQ(cfg.chains, 3u);
    kv.set("sead", "1");
    EXPECT_THROW(cli::resolve("fit", kv), ValidationError);
    EXPECT_THROW(cli::resolve("fit", parse_text("family=horseshoe\n")), ValidationError);
    EXPECT_THROW(cli::resolve("fit", parse_text("iters=many\n")), ValidationError);
}

TEST(Config, HashIgnoresLocationsAndWorkers) {
    const auto a = parse_text("seed=1\nworkers=1\nout=/x\narchive=/a\nmodels=joint=/f1\n");
    const auto b = parse_text("seed=1\nworkers=4\nout=/y\narchive=/b\nmodels=joint=/f2\n");
    const auto c = parse_text("seed=2\nworkers=1\nout=/x\narchive=/a\nmodels=joint=/f1\n");
    const auto d = parse_text("seed=1\nworkers=1\nout=/x\narchive=/a\nmodels=gwas=/f1\n");
    EXPECT_EQ(cli::config_hash(a), cli::config_hash(b));
    EXPECT_NE(cli::config_hash(a), cli::config_hash(c));
    EXPECT_NE(cli::config_hash(a), cli::config_hash(d));
}

TEST(Tables, DelimiterAndMissingValues) {
    const fs::path dir = fs::temp_directory_path() / fmt::format("threegroups_tables_{}", ::getpid());
    fs::create_directories(dir);
    {
        std::ofstream(dir / "a.csv") << "# comment\nid,x\nr1,1\nr2,2\n";
        std::ofstream(dir / "b.tsv") << "id\tx\nr1\tNA\n";
        std::ofstream(dir / "c.tsv") << "id\tx\nr1\t1\t2\n";
    }
    const auto a = read_table(dir / "a.csv");
    EXPECT_EQ(a.rows.size(), 2u);
    EXPECT_EQ(a.column("x"), 1u);
    EXPECT_THROW((void)a.column("y"), ValidationError);
    EXPECT_THROW(read_table(dir / "b.tsv"), ValidationError);
    EXPECT_EQ(read_table_allow_missing(dir / "b.tsv").rows[0][1], "NA");
    EXPECT_THROW(read_table(dir / "c.tsv"), ValidationError);
    EXPECT_THROW(read_table(dir / "absent.tsv"), ValidationError);
    fs::remove_all(dir);
}

TEST_F(Workspace, TraceAndSummaryRoundTrip) {
    SimConfig sim;
    sim.n_genes = 6;
    sim.n_gwas = 100;
    sim.n_rna = 10;
    sim.seed = 21;
    const auto rep = gen_replicate(sim, 0);
    ChainConfig cfg;
    cfg.n_iter = 60;
    cfg.burn_in = 20;
    cfg.seed = 4;
    const auto data = ModelData::build(&rep.rna, &rep.gwas, ModalitySet{true, true});
    const Trace t = run_chain(data, cfg);
    write_trace(root_ / "t.jsonl", t, "abc");
    const auto loaded = read_trace(root_ / "t.jsonl");
    EXPECT_TRUE(loaded.complete);
    EXPECT_EQ(loaded.config_hash, "abc");
    EXPECT_EQ(loaded.bad_lines, 0u);
    ASSERT_EQ(loaded.trace.records.size(), t.records.size());
    for (std::size_t r = 0; r < t.records.size(); ++r) {
        EXPECT_EQ(loaded.trace.records[r].labels, t.records[r].labels);
        EXPECT_EQ(loaded.trace.records[r].gwas_effects, t.records[r].gwas_effects);
        EXPECT_EQ(loaded.trace.records[r].log_posterior, t.records[r].log_posterior);
    }
    EXPECT_EQ(loaded.trace.acceptance.size(), t.acceptance.size());

    const auto s = summarize(t, cfg.burn_in);
    write_summary(root_ / "s.tsv", s, "abc");
    const auto rows = read_summary(root_ / "s.tsv");
    ASSERT_EQ(rows.size(), s.genes.size());
    for (std::size_t j = 0; j < rows.size(); ++j) {
        EXPECT_EQ(rows[j].gene_id, s.genes[j].gene_id);
        EXPECT_EQ(rows[j].p_null, s.genes[j].p_null);
        EXPECT_EQ(rows[j].p_del, s.genes[j].p_del);
    }
}

TEST_F(Workspace, TruncatedTraceKeepsIntactRecords) {
    SimConfig sim;
    sim.n_genes = 4;
    sim.n_gwas = 60;
    sim.n_rna = 8;
    const auto rep = gen_replicate(sim, 0);
    ChainConfig cfg;
    cfg.n_iter = 30;
    cfg.burn_in = 10;
    const Trace t = run_chain(ModelData::build(&rep.rna, &rep.gwas, ModalitySet{true, true}), cfg);
    write_trace(root_ / "t.jsonl", t, "h");
    std::string text = slurp(root_ / "t.jsonl");
    const auto cut = text.rfind('\n', text.size() - 2);
    text.resize(cut + 1);
    text += "{\"type\":\"iter\",\"t\":";
    std::ofstream(root_ / "t.jsonl", std::ios::trunc) << text;
    const auto loaded = read_trace(root_ / "t.jsonl");
    EXPECT_FALSE(loaded.complete);
    EXPECT_EQ(loaded.bad_lines, 1u);
    EXPECT_EQ(loaded.trace.records.size(), t.records.size());
}

TEST_F(Workspace, ExitCodes) {
    EXPECT_EQ(cli_run({"--help"}), cli::kExitOk);
    EXPECT_EQ(cli_run({}), cli::kExitValidation);
    EXPECT_EQ(cli_run({"frobnicate"}), cli::kExitValidation);
    EXPECT_EQ(cli_run({"fit", "--family", "horseshoe", "--out", (root_ / "x").string()}), cli::kExitValidation);
    EXPECT_EQ(cli_run({"fit", "--set", "bogus=1", "--out", (root_ / "x").string()}), cli::kExitValidation);
    EXPECT_EQ(cli_run({"fit", "--config", (root_ / "missing.cfg").string()}), cli::kExitValidation);
    EXPECT_EQ(cli_run({"fit", "--out", (root_ / "x").string()}), cli::kExitValidation);
    EXPECT_EQ(cli_run({"simulate", "--set", "genes=2", "--set", "n_del=3", "--out", (root_ / "y").string()}),
              cli::kExitValidation);
}

TEST_F(Workspace, ConfigFileAndOverrides) {
    std::ofstream(root_ / "run.cfg") << "genes = 5\nreps = 1\nn_gwas = 50\nn_rna = 6\nseed = 9\n";
    ASSERT_EQ(cli_run({"simulate", "--config", (root_ / "run.cfg").string(), "--set", "genes=7", "--out",
                       (root_ / "sim").string()}),
              cli::kExitOk);
    const auto truth = read_truth(root_ / "sim" / "rep_000" / "truth.tsv");
    EXPECT_EQ(truth.gene_ids.size(), 7u);
}

TEST_F(Workspace, ForceGuardsNonEmptyOutput) {
    const fs::path out = root_ / "sim";
    ASSERT_EQ(simulate(out), cli::kExitOk);
    EXPECT_EQ(simulate(out), cli::kExitValidation);
    EXPECT_EQ(simulate(out, {"--force"}), cli::kExitOk);
    std::ofstream(root_ / "file") << "x";
    EXPECT_EQ(simulate(root_ / "file"), cli::kExitValidation);
}

TEST_F(Workspace, MaxRamEstimateWritesNothing) {
    ASSERT_EQ(simulate(root_ / "sim"), cli::kExitOk);
    const fs::path fit = root_ / "fit";
    EXPECT_EQ(cli_run({"fit", "--archive", (root_ / "sim").string(), "--iters", "100", "--max-ram-estimate", "--out",
                       fit.string()}),
              cli::kExitOk);
    EXPECT_FALSE(fs::exists(fit / "rep_000" / "summary.tsv"));
    EXPECT_GT(cli::estimate_fit_bytes(10, 8, 120, 8, 200, 2), cli::estimate_fit_bytes(10, 8, 120, 8, 100, 2));
}

TEST_F(Workspace, FitScoreSummarizeDeterministic) {
    std::vector<std::string> snapshots;
    for (const char* run : {"a", "b"}) {
        const fs::path dir = root_ / run;
        ASSERT_EQ(simulate(dir / "sim"), cli::kExitOk);
        ASSERT_EQ(cli_run({"fit", "--archive", (dir / "sim").string(), "--iters", "200", "--chains", "2", "--workers",
                           run[0] == 'a' ? "1" : "2", "--seed", "8", "--out", (dir / "fit").string()}),
                  cli::kExitOk);
        ASSERT_EQ(cli_run({"score", "--archive", (dir / "sim").string(), "--model", "joint=" + (dir / "fit").string(),
                           "--out", (dir / "score").string()}),
                  cli::kExitOk);
        ASSERT_EQ(cli_run({"summarize", "--trace", (dir / "fit" / "rep_001" / "trace_chain0.jsonl").string(), "--out",
                           (dir / "summary").string()}),
                  cli::kExitOk);
        std::string all;
        for (const auto& e : fs::recursive_directory_iterator(dir)) {
            if (e.is_regular_file()) all += fs::relative(e.path(), dir).string() + "\n" + slurp(e.path());
        }
        snapshots.push_back(all);
    }
    EXPECT_FALSE(snapshots[0].empty());
    EXPECT_EQ(snapshots[0], snapshots[1]);
}

TEST_F(Workspace, ScoreRejectsMismatchedGeneIds) {
    ASSERT_EQ(simulate(root_ / "sim"), cli::kExitOk);
    ASSERT_EQ(cli_run({"fit", "--archive", (root_ / "sim").string(), "--iters", "50", "--out",
                       (root_ / "fit").string()}),
              cli::kExitOk);
    const fs::path summary = root_ / "fit" / "rep_000" / "summary.tsv";
    std::string text = slurp(summary);
    const auto pos = text.find("g0001");
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, 5, "gXXXX");
    std::ofstream(summary, std::ios::trunc) << text;
    EXPECT_EQ(cli_run({"score", "--archive", (root_ / "sim").string(), "--model", "joint=" + (root_ / "fit").string(),
                       "--out", (root_ / "score").string()}),
              cli::kExitValidation);
}
