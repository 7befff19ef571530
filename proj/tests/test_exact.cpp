#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <limits>

#include "cfdx/exact.hpp"
#include "cfdx/evaluation.hpp"
#include "cfdx/measures.hpp"
#include "cfdx/synthetic.hpp"
#include "support/oracle.hpp"

using namespace cfdx;
using testing_support::brute_force;
using testing_support::brute_likelihood;
using testing_support::rel_dev;
using testing_support::tiny_evidence;
using testing_support::tiny_net;
using testing_support::two_disease_net;

// Hand expansion for the tiny net: P(S=1) = 1 - 0.95 (0.7 + 0.3 * 0.4) = 0.221,
// P(D=1, S=1) = 0.3 (1 - 0.95 * 0.4) = 0.186.
TEST(TinyNet, LikelihoodAndPosterior) {
    const Model m(tiny_net());
    const auto ev = tiny_evidence();
    EXPECT_NEAR(evidence_likelihood(m, ev), 0.221, 1e-15);
    EXPECT_NEAR(disease_posterior(m, ev, "D"), 0.186 / 0.221, 1e-12);
    EXPECT_NEAR(disease_posterior(m, ev, "D"), 0.841629, 1e-6);
}

TEST(TinyNet, JointOffMarginals) {
    const Model m(tiny_net());
    EXPECT_NEAR(joint_off_marginal(m, std::vector<std::string>{}, std::string("D"), {}), 0.3, 1e-15);
    EXPECT_NEAR(joint_off_marginal(m, std::vector<std::string>{"S"}, std::string("D"), {}), 0.3 * 0.95 * 0.4, 1e-15);
    EXPECT_NEAR(joint_off_marginal(m, std::vector<std::string>{"S"}, std::nullopt, {}), 0.779, 1e-15);
}

TEST(TinyNet, CounterfactualMeasures) {
    const Model m(tiny_net());
    const auto ev = tiny_evidence();
    // sufficiency: 0.3 * 0.6 / 0.221; disablement: 0.3 * 0.6 * 0.95 / 0.221
    EXPECT_NEAR(expected_sufficiency(m, ev, "D").value, 0.18 / 0.221, 1e-12);
    EXPECT_NEAR(expected_disablement(m, ev, "D").value, 0.171 / 0.221, 1e-12);
    EXPECT_NEAR(expected_sufficiency(m, ev, "D").value, 0.814480, 1e-6);
    EXPECT_NEAR(expected_disablement(m, ev, "D").value, 0.773756, 1e-6);
}

TEST(TinyNet, NoPositivesMeansNoMeasure) {
    const Model m(tiny_net());
    Evidence ev;
    ev.negative = {"S"};
    const auto s = score_evidence(m, ev);
    EXPECT_NEAR(s.likelihood, 0.779, 1e-15);
    EXPECT_NEAR(s.posterior[0], 0.3 * 0.95 * 0.4 / 0.779, 1e-12);
    EXPECT_EQ(s.sufficiency[0], 0.0);
    EXPECT_EQ(s.disablement[0], 0.0);
}

TEST(JointOffMarginal, MatchesBruteForce) {
    const auto net = two_disease_net();
    const Model m(net);
    Evidence ev;
    ev.negative = {"S1", "S3"};
    const auto r = m.resolve(ev);
    EXPECT_NEAR(joint_off_marginal(m, r.negative, std::nullopt, r.risk_state), brute_likelihood(net, ev), 1e-15);
}

TEST(Exact, TwoDiseaseNetMatchesBruteForce) {
    const auto net = two_disease_net();
    const Model m(net);
    Evidence ev;
    ev.positive = {"S1", "S2"};
    ev.negative = {"S3"};
    const auto truth = brute_force(net, ev);
    const auto s = score_evidence(m, ev);
    EXPECT_NEAR(s.likelihood, truth.likelihood, 1e-14);
    for (std::size_t k = 0; k < 2; ++k) {
        const auto& id = m.disease_id(k);
        EXPECT_LT(rel_dev(s.posterior[k], truth.posterior.at(id)), 1e-10) << id;
        EXPECT_LT(rel_dev(s.sufficiency[k], truth.sufficiency.at(id)), 1e-10) << id;
        EXPECT_LT(rel_dev(s.disablement[k], truth.disablement.at(id)), 1e-10) << id;
    }
}

TEST(Exact, RandomSmallNetsMatchBruteForce) {
    SmallNetConfig cfg;
    cfg.max_risks = 2;
    cfg.max_diseases = 3;
    cfg.max_symptoms = 4;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const auto net = random_small_network(cfg, seed);
        const Model m(net);
        Rng rng(seed + 1000);
        const auto ev = random_evidence(m, rng);
        const auto truth = brute_force(net, ev);
        const auto s = score_evidence(m, ev);
        ASSERT_FALSE(s.zero_likelihood);
        EXPECT_NEAR(s.likelihood, truth.likelihood, 1e-13);
        for (std::size_t k = 0; k < m.num_diseases(); ++k) {
            const auto& id = m.disease_id(k);
            EXPECT_LT(rel_dev(s.posterior[k], truth.posterior.at(id)), 1e-9) << seed << ' ' << id;
            EXPECT_LT(rel_dev(s.sufficiency[k], truth.sufficiency.at(id)), 1e-9) << seed << ' ' << id;
            EXPECT_LT(rel_dev(s.disablement[k], truth.disablement.at(id)), 1e-9) << seed << ' ' << id;
        }
    }
}

TEST(Exact, UnitWeightsRecoverPosterior) {
    const Model m(synthetic_network(SyntheticConfig{5, 12, 20}, 4));
    Rng rng(4);
    InferenceOptions unit;
    unit.weights = MeasureWeights::unit;
    for (int i = 0; i < 10; ++i) {
        const auto ev = random_evidence(m, rng, {0.25, 0.25, 0.5});
        const auto a = score_evidence(m, ev);
        const auto b = score_evidence(m, ev, unit);
        for (std::size_t k = 0; k < m.num_diseases(); ++k) {
            EXPECT_NEAR(b.sufficiency[k], a.posterior[k], 1e-12);
            EXPECT_NEAR(b.disablement[k], a.posterior[k], 1e-12);
        }
    }
}

// The reported bound already covers the tau / gamma weights (at most |S+|
// per term).
double rounding_bound(const ExactScores& s) { return s.error_bound; }

class WalkEquivalence : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(WalkEquivalence, AllConfigurationsAgree) {
    const Model m(synthetic_network(SyntheticConfig{6, 15, 25}, GetParam()));
    Rng rng(GetParam());
    const auto ev = random_evidence(m, rng, {0.35, 0.2, 0.5});
    InferenceOptions gray, free, sorted, threaded;
    // This checks the error bound itself, so nothing is rejected for it.
    for (auto* o : {&gray, &free, &sorted, &threaded}) o->max_rounding_error = INFINITY;
    gray.walk = SubsetWalk::gray_code;
    free.walk = SubsetWalk::divide_free;
    sorted.summation = Summation::sorted_magnitude;
    threaded.threads = 4;
    const auto a = score_evidence(m, ev, gray);
    const auto b = score_evidence(m, ev, free);
    const auto c = score_evidence(m, ev, sorted);
    const auto d = score_evidence(m, ev, threaded);
    // The walks differ only in rounding, which the signed sums amplify by
    // the reported cancellation factor.
    auto same = [&](double x, double y) {
        return std::fabs(x - y) <= 1e-12 + rounding_bound(a) * std::max(1.0, std::fabs(y));
    };
    EXPECT_TRUE(same(a.likelihood, b.likelihood));
    EXPECT_TRUE(same(a.likelihood, c.likelihood));
    for (std::size_t k = 0; k < m.num_diseases(); ++k) {
        EXPECT_TRUE(same(a.posterior[k], b.posterior[k]));
        EXPECT_TRUE(same(a.sufficiency[k], b.sufficiency[k]));
        EXPECT_TRUE(same(a.disablement[k], c.disablement[k]));
        EXPECT_TRUE(same(a.sufficiency[k], c.sufficiency[k]));
    }
    // Results do not depend on the worker count, bit for bit.
    InferenceOptions one = threaded;
    one.threads = 1;
    const auto e = score_evidence(m, ev, one);
    EXPECT_EQ(d.posterior, e.posterior);
    EXPECT_EQ(d.sufficiency, e.sufficiency);
    EXPECT_EQ(d.disablement, e.disablement);
    EXPECT_EQ(d.likelihood, e.likelihood);
}

INSTANTIATE_TEST_SUITE_P(Seeds, WalkEquivalence, ::testing::Values(1, 2, 3, 4, 5));

TEST(Conditioning, ErrorStaysWithinReportedCancellation) {
    // These seeds give nine to thirteen positives and P(E) down to ~1e-10,
    // where the signed subset terms cancel by twelve orders of magnitude.
    for (std::uint64_t seed : {1, 2, 4, 5}) {
        const Model m(synthetic_network(SyntheticConfig{6, 15, 25}, seed));
        Rng rng(seed);
        const auto ev = random_evidence(m, rng, {0.35, 0.2, 0.5});
        const auto truth = testing_support::direct_sum(m, ev);
        for (auto walk : {SubsetWalk::gray_code, SubsetWalk::divide_free}) {
            InferenceOptions opts;
            opts.walk = walk;
            opts.max_rounding_error = INFINITY;
            const auto s = score_evidence(m, ev, opts);
            EXPECT_GT(s.cancellation, 1.0);
            const double bound = rounding_bound(s);
            EXPECT_LE(std::fabs(s.likelihood - truth.likelihood) / truth.likelihood, bound) << seed;
            for (std::size_t k = 0; k < m.num_diseases(); ++k)
                EXPECT_LE(std::fabs(s.posterior[k] - truth.posterior[k]), bound) << seed << ' ' << k;
        }
    }
}

// Sampled patients with 14-16 findings that double precision cannot resolve
// to the default tolerance; the long double rerun must, within its bound.
TEST(Conditioning, ExtendedPrecisionFallback) {
    for (std::uint64_t seed : {17, 49, 72}) {
        const Model m(synthetic_network(SyntheticConfig{6, 15, 25}, seed));
        InferenceOptions narrow;
        narrow.extended_fallback = false;
        bool seen = false;
        for (const auto& v : generate_vignettes(m, 20, seed)) {
            const auto s = score_evidence(m, v.evidence);
            if (!s.extended_precision) continue;
            seen = true;
            EXPECT_LE(s.error_bound, InferenceOptions{}.max_rounding_error);
            EXPECT_THROW(score_evidence(m, v.evidence, narrow), NumericsError);
            InferenceOptions cheap;
            cheap.extended_max_work = 0;
            EXPECT_THROW(score_evidence(m, v.evidence, cheap), NumericsError);
            const auto d = testing_support::direct_sum(m, v.evidence);
            EXPECT_LE(std::fabs(s.likelihood - d.likelihood), s.error_bound * d.likelihood);
            for (std::size_t k = 0; k < d.posterior.size(); ++k)
                EXPECT_NEAR(s.posterior[k], d.posterior[k], 2.0 * s.error_bound);
            break;
        }
        EXPECT_TRUE(seen) << "seed " << seed;
    }
}

TEST(Conditioning, WellConditionedEvidenceIsTight) {
    const auto net = two_disease_net();
    const Model m(net);
    Evidence ev;
    ev.positive = {"S1", "S2"};
    const auto s = score_evidence(m, ev);
    EXPECT_LT(s.cancellation, 100.0);
    EXPECT_NEAR(s.likelihood, testing_support::direct_sum(m, ev).likelihood, 1e-15);
}

TEST(SubsetWalk, GrayCodeVisitsEverySubsetOnce) {
    for (std::size_t n : {0u, 1u, 5u, 9u}) {
        SubsetTables t;
        t.positives = n;
        t.diseases = 1;
        t.lambda.assign(n, 0.5);
        t.tau_step.assign(n, 0.5);
        t.gamma_step.assign(n, -1.0);
        t.leak.assign(n, 0.9);
        t.base_product = {1.0};
        t.tau_total = {0.5 * double(n)};
        for (auto walk : {SubsetWalk::gray_code, SubsetWalk::divide_free}) {
            const auto plan = BlockPlan::for_positives(n, 3);
            std::vector<int> seen(std::size_t{1} << n, 0);
            for (std::size_t b = 0; b < plan.blocks(); ++b)
                walk_block(t, walk, plan, b, [&](const SubsetState& st) {
                    ++seen[st.subset];
                    EXPECT_EQ(st.size, std::popcount(st.subset));
                    EXPECT_NEAR(st.product[0], std::pow(0.5, st.size), 1e-15);
                    EXPECT_NEAR(st.leak, std::pow(0.9, st.size), 1e-15);
                });
            for (int c : seen) EXPECT_EQ(c, 1);
        }
    }
}

TEST(SubsetWalk, IncrementalProductsDoNotDrift) {
    // 2^16 Gray steps with multiply/divide updates; every 2^10 steps compare
    // against a fresh direct computation.
    const std::size_t n = 16, nd = 8;
    Rng rng(77);
    SubsetTables t;
    t.positives = n;
    t.diseases = nd;
    for (std::size_t i = 0; i < n * nd; ++i) {
        const double lam = rng.uniform(0.05, 1.0);
        t.lambda.push_back(lam);
        t.tau_step.push_back(1.0 - lam);
        t.gamma_step.push_back(1.0 - 1.0 / lam);
    }
    for (std::size_t i = 0; i < n; ++i) t.leak.push_back(rng.uniform(0.9, 1.0));
    t.base_product.assign(nd, 1.0);
    t.tau_total.assign(nd, 0.0);
    SubsetTermCache cache(t), fresh(t);
    cache.seed(0);
    double worst = 0.0;
    for (std::uint64_t idx = 1; idx < (std::uint64_t{1} << n); ++idx) {
        cache.toggle(static_cast<std::size_t>(std::countr_zero(idx)));
        ASSERT_EQ(cache.state().subset, gray_code(idx));
        if (idx % 1024 == 0) {
            fresh.seed(gray_code(idx));
            for (std::size_t j = 0; j < nd; ++j) {
                worst = std::max(worst, std::fabs(cache.state().product[j] / fresh.state().product[j] - 1.0));
                EXPECT_NEAR(cache.state().gamma[j], fresh.state().gamma[j], 1e-9 * (1 + std::fabs(fresh.state().gamma[j])));
            }
        }
    }
    EXPECT_LT(worst, 1e-12);
}

TEST(Exact, UnderflowFallsBackToLogSpace) {
    // One disease explains twelve findings almost deterministically; subset
    // products reach 1e-360 and must be recomputed in log space.
    NoisyOrNetwork net;
    net.diseases.push_back({"D1", 0.99, {}});
    net.diseases.push_back({"D2", 0.95, {}});
    Evidence ev;
    for (int i = 0; i < 12; ++i) {
        const std::string id = "S" + std::to_string(i);
        net.symptoms.push_back({id, 0.999, {{"D1", 1e-30}, {"D2", 0.9}}});
        ev.positive.insert(id);
    }
    const Model m(net);
    for (auto walk : {SubsetWalk::gray_code, SubsetWalk::divide_free}) {
        InferenceOptions opts;
        opts.walk = walk;
        const auto s = score_evidence(m, ev, opts);
        ASSERT_FALSE(s.zero_likelihood);
        EXPECT_LT(rel_dev(s.likelihood, brute_likelihood(net, ev)), 1e-9);
        EXPECT_TRUE(std::isfinite(s.posterior[0]) && std::isfinite(s.disablement[0]));
        EXPECT_NEAR(s.posterior[0], 1.0, 1e-9);
        // Every finding is caused by D1; sufficiency counts all of them.
        EXPECT_NEAR(s.sufficiency[0], 12.0, 1e-9);
    }
}

TEST(Exact, ZeroLikelihoodIsReported) {
    NoisyOrNetwork net;
    net.diseases.push_back({"D", 1.0, {}});  // never on
    net.symptoms.push_back({"S", 1.0, {{"D", 0.5}}});
    const Model m(net);
    Evidence ev;
    ev.positive = {"S"};
    const auto s = score_evidence(m, ev);
    EXPECT_TRUE(s.zero_likelihood);
    EXPECT_THROW(disease_posterior(m, ev, "D"), ZeroLikelihood);
    EXPECT_THROW(expected_sufficiency(m, ev, "D"), ZeroLikelihood);
    EXPECT_THROW(rank_diseases(m, ev, MeasureKind::posterior), ZeroLikelihood);
}

TEST(Exact, StructuralZerosAreDetected) {
    auto risk = testing_support::two_disease_net();
    risk.risk_factors[0].prior = 0.0;
    Evidence on;
    on.risks = {{"R", 1}};
    EXPECT_TRUE(score_evidence(Model(risk), on).zero_likelihood);

    // S1 needs D1, which needs R; R is observed off and D1 has no own leak.
    auto chain = testing_support::two_disease_net();
    chain.diseases[0].leak = 1.0;
    chain.symptoms[0].leak = 1.0;
    Evidence cut;
    cut.risks = {{"R", 0}};
    cut.positive = {"S1"};
    const Model m(chain);
    EXPECT_TRUE(score_evidence(m, cut).zero_likelihood);
    cut.risks = {};
    const auto s = score_evidence(m, cut);
    ASSERT_FALSE(s.zero_likelihood);
    EXPECT_NEAR(s.likelihood, brute_likelihood(chain, cut), 1e-15);
}

TEST(Exact, UnresolvableCancellationThrows) {
    // Rare diseases with many weak findings: the likelihood is far below the
    // size of the inclusion-exclusion terms.
    NoisyOrNetwork net;
    Evidence ev;
    net.diseases.push_back({"D", 1.0 - 1e-12, {}});
    for (int i = 0; i < 18; ++i) {
        const std::string id = "S" + std::to_string(i);
        net.symptoms.push_back({id, 1.0 - 1e-3, {{"D", 0.5}}});
        ev.positive.insert(id);
    }
    const Model m(net);
    EXPECT_THROW(score_evidence(m, ev), NumericsError);
    InferenceOptions loose;
    loose.max_rounding_error = std::numeric_limits<double>::infinity();
    EXPECT_NO_THROW(score_evidence(m, ev, loose));
}

TEST(Exact, CapsAreEnforced) {
    const Model m(synthetic_network(SyntheticConfig{25, 5, 30}, 1));
    Evidence many;
    for (std::size_t s = 0; s < 30; ++s) many.positive.insert(m.symptom_id(s));
    EXPECT_THROW(score_evidence(m, many), CapExceeded);

    Evidence risks;
    risks.positive = {m.symptom_id(0)};
    EXPECT_THROW(score_evidence(m, risks), CapExceeded);  // 25 unobserved risks > 20
    InferenceOptions wide;
    wide.max_unobserved_risks = 25;
    wide.max_positive = 4;
    for (std::size_t r = 0; r < 10; ++r) risks.risks[m.risk_id(r)] = 0;
    EXPECT_NO_THROW(score_evidence(m, risks));
    EXPECT_THROW(score_evidence(m, many, wide), CapExceeded);
}

TEST(Exact, UnobservedRisksMarginalisedExactly) {
    const auto net = two_disease_net();
    const Model m(net);
    Evidence ev;
    ev.positive = {"S1"};
    const auto truth = brute_force(net, ev);
    const auto s = score_evidence(m, ev);
    EXPECT_LT(rel_dev(s.posterior[0], truth.posterior.at("D1")), 1e-12);

    // Observing the risk agrees with conditioning the brute force on it.
    ev.risks = {{"R", 1}};
    const auto truth_r = brute_force(net, ev);
    EXPECT_LT(rel_dev(score_evidence(m, ev).posterior[0], truth_r.posterior.at("D1")), 1e-12);
}

TEST(Exact, DiseaseWithoutPositiveChildrenHasZeroMeasures) {
    const Model m(two_disease_net());
    Evidence ev;
    ev.positive = {"S1"};
    const auto s = score_evidence(m, ev);
    EXPECT_EQ(s.sufficiency[1], 0.0);
    EXPECT_NEAR(s.disablement[1], 0.0, 1e-15);
    EXPECT_GT(s.posterior[1], 0.0);
}
