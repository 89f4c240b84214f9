#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "threegroups/priors.hpp"

using namespace threegroups;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <typename F>
double half_line_mass(F log_density, bool negative = false) {
    boost::math::quadrature::exp_sinh<double> q;
    return q.integrate([&](double x) { return std::exp(log_density(negative ? -x : x)); }, 0.0, kInf);
}

}  // namespace

TEST(ModelPrior, SingleGeneModelsEachOneThird) {
    const DirichletConfig cfg;
    EXPECT_NEAR(std::exp(log_model_prior(1, 0, 0, cfg)), 1.0 / 3.0, 1e-14);
    EXPECT_NEAR(std::exp(log_model_prior(0, 1, 0, cfg)), 1.0 / 3.0, 1e-14);
    EXPECT_NEAR(std::exp(log_model_prior(0, 0, 1, cfg)), 1.0 / 3.0, 1e-14);
}

TEST(ModelPrior, AllNullThreeGenesMatchesMonteCarlo) {
    // E[lambda1^3] under Dirichlet(1,1,1), drawn from normalized exponentials
    Rng rng(17);
    constexpr std::size_t n = 1000000;
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e1 = -std::log(draw_uniform(rng));
        const double e2 = -std::log(draw_uniform(rng));
        const double e3 = -std::log(draw_uniform(rng));
        const double l1 = e1 / (e1 + e2 + e3);
        const double v = l1 * l1 * l1;
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    EXPECT_NEAR(mean, 0.1, 3.0 * se);
    EXPECT_NEAR(log_model_prior(3, 0, 0, DirichletConfig{}), std::log(0.1), 1e-14);
}

TEST(ModelPrior, EnumerationSumsToOne) {
    const DirichletConfig cfg{1.7, {0.4, 2.0, 1.1}};
    for (std::size_t J = 1; J <= 6; ++J) {
        std::size_t n_models = 1;
        for (std::size_t j = 0; j < J; ++j) n_models *= 3;
        double total = 0.0;
        for (std::size_t code = 0; code < n_models; ++code) {
            std::vector<GeneLabel> labels;
            for (std::size_t c = code, j = 0; j < J; ++j, c /= 3) labels.push_back(kAllLabels[c % 3]);
            total += std::exp(log_model_prior(LabelVector(labels).counts(), cfg));
        }
        EXPECT_NEAR(total, 1.0, 1e-10) << "J=" << J;
    }
}

TEST(ModelPrior, PenaltyGrowsWithNonNullCount) {
    const DirichletConfig cfg;
    constexpr std::size_t J = 40;
    double prev = log_model_prior(J, 0, 0, cfg);
    for (std::size_t k = 1; k <= J / 4; ++k) {
        const double cur = log_model_prior(J - 2 * k, k, k, cfg);
        EXPECT_LT(cur, prev) << k;
        prev = cur;
    }
}

TEST(ModelPrior, RejectsNonPositiveHyperparameters) {
    EXPECT_THROW(log_model_prior(1, 0, 0, DirichletConfig{0.0, {1, 1, 1}}), ValidationError);
    EXPECT_THROW(log_model_prior(1, 0, 0, DirichletConfig{1.0, {1, -1, 1}}), ValidationError);
}

TEST(Lambda, EmptyCountsMeanOneThird) {
    Rng rng(5);
    constexpr std::size_t n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = sample_lambda_given_labels({0, 0, 0}, DirichletConfig{}, rng);
        ASSERT_TRUE(p.on_simplex());
        sum += p.lambda[0];
        sum2 += p.lambda[0] * p.lambda[0];
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    EXPECT_NEAR(mean, 1.0 / 3.0, 3.0 * se);
}

TEST(Lambda, ConcentratesOnDominantGroup) {
    Rng rng(6);
    double sum = 0.0;
    for (int i = 0; i < 1000; ++i) sum += sample_lambda_given_labels({1000000, 0, 0}, DirichletConfig{}, rng).lambda[0];
    EXPECT_GT(sum / 1000.0, 0.999);
}

TEST(Lambda, FirstStickFollowsBeta) {
    Rng rng(7);
    const DirichletConfig cfg{2.0, {1.0, 0.5, 1.5}};
    const GroupCounts k{3, 4, 1};
    std::vector<double> v1;
    for (int i = 0; i < 10000; ++i) v1.push_back(sample_lambda_given_labels(k, cfg, rng).lambda[0]);
    const boost::math::beta_distribution<double> beta(2.0 + 3.0, 1.0 + 4.0 + 3.0 + 1.0);
    const double d = oracle::ks_statistic(v1, [&](double x) { return boost::math::cdf(beta, x); });
    EXPECT_GT(oracle::ks_pvalue(d, v1.size()), 0.01);
}

TEST(Pimom, HandValues) {
    EXPECT_NEAR(log_pimom(1.0, 1.0, 2.0), -1.0, 1e-15);
    EXPECT_NEAR(log_pimom(-1.0, 1.0, 2.0), -1.0, 1e-15);
    EXPECT_EQ(log_pimom(0.0, 1.0, 2.0), -kInf);
    double prev = log_pimom(0.05, 1.0, 2.0);
    for (double b = 0.04; b > 0.001; b -= 0.01) {
        const double cur = log_pimom(b, 1.0, 2.0);
        EXPECT_LT(cur, prev);
        prev = cur;
    }
}

TEST(Pimom, HalfHandValues) {
    EXPECT_NEAR(log_half_pimom(1.0, 1.0, 2.0, Sign::Positive), std::numbers::ln2 - 1.0, 1e-15);
    EXPECT_EQ(log_half_pimom(-1.0, 1.0, 2.0, Sign::Positive), -kInf);
    EXPECT_EQ(log_half_pimom(0.0, 1.0, 2.0, Sign::Negative), -kInf);
}

TEST(Densities, NormalizeByQuadrature) {
    for (double tau : {0.3, 1.0, 2.5}) {
        for (double r : {1.0, 2.0, 3.0}) {
            EXPECT_NEAR(half_line_mass([&](double x) { return log_half_pimom(x, tau, r, Sign::Positive); }), 1.0,
                        1e-6);
            EXPECT_NEAR(half_line_mass([&](double x) { return log_half_pimom(x, tau, r, Sign::Negative); }, true),
                        1.0, 1e-6);
        }
    }
    EXPECT_NEAR(half_line_mass([](double x) { return log_half_normal(x, 0.7, Sign::Positive); }), 1.0, 1e-6);
    EXPECT_NEAR(half_line_mass([](double x) { return log_half_t(x, 4.0, 2.0); }), 1.0, 1e-6);
    EXPECT_NEAR(half_line_mass([](double x) { return log_inverse_gamma(x, 2.0, 3.0); }), 1.0, 1e-6);
    for (double mu : {-2.0, 0.0, 1.5}) {
        EXPECT_NEAR(half_line_mass([&](double x) { return log_half_truncated_normal(x, mu, 0.8, Sign::Positive); }),
                    1.0, 1e-6);
    }
}

TEST(Densities, HalfTAtZeroDoublesCentralT) {
    const boost::math::students_t t4(4.0);
    EXPECT_NEAR(std::exp(log_half_t(0.0, 4.0, 1.0)), 2.0 * boost::math::pdf(t4, 0.0), 1e-14);
    EXPECT_EQ(log_half_t(-0.1, 4.0, 1.0), -kInf);
}

TEST(Sampling, HalfPimomMatchesCdf) {
    Rng rng(8);
    const double tau = 0.6, r = 2.0;
    std::vector<double> x;
    for (int i = 0; i < 10000; ++i) {
        const double b = sample_half_pimom(rng, tau, r, Sign::Negative);
        ASSERT_LT(b, 0.0);
        x.push_back(-b);
    }
    // |beta| <= b  iff  Gamma(r/2, rate tau) >= 1/b^2
    const double d = oracle::ks_statistic(x, [&](double b) { return boost::math::gamma_q(0.5 * r, tau / (b * b)); });
    EXPECT_GT(oracle::ks_pvalue(d, x.size()), 0.01);
}

TEST(Sampling, TruncatedNormalBothBranches) {
    for (double mu : {1.0, -4.0}) {
        Rng rng(9);
        const double sigma = 1.0;
        const boost::math::normal z(mu, sigma);
        const double mass = boost::math::cdf(boost::math::complement(z, 0.0));
        std::vector<double> x;
        for (int i = 0; i < 10000; ++i) x.push_back(sample_half_truncated_normal(rng, mu, sigma, Sign::Positive));
        const double d = oracle::ks_statistic(
            x, [&](double v) { return (boost::math::cdf(z, v) - boost::math::cdf(z, 0.0)) / mass; });
        EXPECT_GT(oracle::ks_pvalue(d, x.size()), 0.01) << "mu=" << mu;
    }
}

TEST(EffectPrior, SpikeAndSupport) {
    PriorConfig cfg;
    cfg.family = PriorFamily::NonlocalFixed;
    const auto h = HyperState::initial(cfg);
    EXPECT_EQ(log_effect_prior(0.0, GeneLabel::Null, Modality::Gwas, cfg, h), 0.0);
    EXPECT_EQ(log_effect_prior(0.1, GeneLabel::Null, Modality::Gwas, cfg, h), -kInf);
    EXPECT_EQ(log_effect_prior(-0.3, GeneLabel::Deleterious, Modality::Rna, cfg, h), -kInf);
    EXPECT_NEAR(log_effect_prior(-1.0, GeneLabel::Beneficial, Modality::Rna, cfg, h), std::numbers::ln2 - 1.0,
                1e-15);
}

TEST(EffectPrior, DrawsRespectSignForEveryFamily) {
    Rng rng(10);
    for (auto family : kAllFamilies) {
        PriorConfig cfg;
        cfg.family = family;
        const auto h = HyperState::initial(cfg);
        for (int i = 0; i < 2000; ++i) {
            for (auto m : kAllModalities) {
                EXPECT_GT(sample_effect_prior(rng, GeneLabel::Deleterious, m, cfg, h), 0.0);
                EXPECT_LT(sample_effect_prior(rng, GeneLabel::Beneficial, m, cfg, h), 0.0);
                EXPECT_EQ(sample_effect_prior(rng, GeneLabel::Null, m, cfg, h), 0.0);
            }
        }
    }
}

TEST(HyperPrior, Mu0AtModeAndTau0Support) {
    PriorConfig cfg;
    EXPECT_NEAR(log_normal_precision(0.0, 0.0, 1e-2), 0.5 * std::log(1e-2) - 0.5 * std::log(2.0 * std::numbers::pi),
                1e-15);
    HyperState h = HyperState::initial(cfg);
    const std::vector<double> log_phi{0.1, -0.2};
    h.tau0 = 0.0;
    EXPECT_EQ(log_hyper_prior(h, cfg, ModalitySet{true, false}, log_phi), -kInf);
    h.tau0 = -1.0;
    EXPECT_EQ(log_dispersion_prior(log_phi, 0.0, h.tau0, cfg), -kInf);
}

TEST(HyperPrior, FixedFamiliesContributeNothingBeyondDispersion) {
    PriorConfig cfg;
    cfg.family = PriorFamily::LocalFixed;
    HyperState h = HyperState::initial(cfg);
    EXPECT_EQ(log_hyper_prior(h, cfg, ModalitySet{false, true}, {}), 0.0);
    cfg.family = PriorFamily::NonlocalInvGammaHyper;
    EXPECT_NEAR(log_hyper_prior(h, cfg, ModalitySet{false, true}, {}),
                2.0 * log_inverse_gamma(1.0, cfg.invgamma_shape, cfg.invgamma_scale), 1e-14);
}

TEST(Names, FamilyAndModalityRoundTrip) {
    for (auto f : kAllFamilies) EXPECT_EQ(parse_family(family_name(f)), f);
    EXPECT_THROW(parse_family("gaussian"), ValidationError);
    EXPECT_EQ(parse_modality_set("joint"), (ModalitySet{true, true}));
    EXPECT_EQ(parse_modality_set("rna"), (ModalitySet{true, false}));
    EXPECT_EQ(parse_modality_set("gwas"), (ModalitySet{false, true}));
    EXPECT_THROW(parse_modality_set("both"), ValidationError);
}
