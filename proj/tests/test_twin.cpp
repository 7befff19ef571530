#include <gtest/gtest.h>

#include "cfdx/exact.hpp"
#include "cfdx/synthetic.hpp"
#include "cfdx/twin.hpp"
#include "support/oracle.hpp"

using namespace cfdx;
using testing_support::brute_force;
using testing_support::rel_dev;
using testing_support::tiny_evidence;
using testing_support::tiny_net;
using testing_support::two_disease_net;

TEST(Latents, CanonicalOrder) {
    const Model m(two_disease_net());
    const LatentSpace space(m);
    // 1 root + 2 leaks + 1 risk edge + 3 leaks + 4 disease edges
    ASSERT_EQ(space.size(), 11u);
    for (std::size_t i = 1; i < space.size(); ++i)
        EXPECT_LT(std::tie(space[i - 1].child_id, space[i - 1].parent_id), std::tie(space[i].child_id, space[i].parent_id));
    EXPECT_EQ(space[0].child_id, "D1");
    EXPECT_EQ(space[0].parent_id, "");
    EXPECT_EQ(space[1].parent_id, "R");
}

TEST(Latents, EnumerationIsNormalisedAndDeterministic) {
    const Model m(two_disease_net());
    double total = 0.0;
    std::vector<FullAssignment> first, second;
    const LatentSpace space(m);
    enumerate_latents(m, [&](const LatentAssignment& u, double p) {
        total += p;
        first.push_back(space.evaluate(u));
    });
    enumerate_latents(m, [&](const LatentAssignment& u, double) { second.push_back(space.evaluate(u)); });
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(first, second);
    EXPECT_THROW(enumerate_latents(m, [](const LatentAssignment&, double) {}, 10), CapExceeded);
}

TEST(EnumerateJoint, SumsToOne) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Model m(random_small_network(SmallNetConfig{}, seed));
        double total = 0.0;
        for (const auto& e : enumerate_joint(m)) total += e.probability;
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(EnumerateJoint, TinyNet) {
    const Model m(tiny_net());
    const auto joint = enumerate_joint(m);
    ASSERT_EQ(joint.size(), 4u);
    for (const auto& e : joint)
        if (e.values.diseases[0] == 1 && e.values.symptoms[0] == 1) EXPECT_NEAR(e.probability, 0.186, 1e-15);
}

TEST(EnumerateJoint, ZeroPriorRisk) {
    auto net = two_disease_net();
    net.risk_factors[0].prior = 0.0;
    const Model m(net);
    for (const auto& e : enumerate_joint(m))
        if (e.values.risks[0] == 1) EXPECT_EQ(e.probability, 0.0);
}

TEST(EnumerateJoint, MatchesLatentEnumeration) {
    const Model m(two_disease_net());
    const LatentSpace space(m);
    std::map<std::vector<std::uint8_t>, double> by_latent;
    enumerate_latents(m, [&](const LatentAssignment& u, double p) {
        const auto v = space.evaluate(u);
        std::vector<std::uint8_t> key = v.risks;
        key.insert(key.end(), v.diseases.begin(), v.diseases.end());
        key.insert(key.end(), v.symptoms.begin(), v.symptoms.end());
        by_latent[key] += p;
    });
    for (const auto& e : enumerate_joint(m)) {
        std::vector<std::uint8_t> key = e.values.risks;
        key.insert(key.end(), e.values.diseases.begin(), e.values.diseases.end());
        key.insert(key.end(), e.values.symptoms.begin(), e.values.symptoms.end());
        EXPECT_NEAR(e.probability, by_latent[key], 1e-15);
    }
}

TEST(EnumerateJoint, CapExceeded) {
    const Model m(synthetic_network(SyntheticConfig{5, 10, 15}, 1));
    EXPECT_THROW(enumerate_joint(m), CapExceeded);
}

TEST(Counterfactual, TinyNetDisablement) {
    const Model m(tiny_net());
    const auto dist = counterfactual_query(m, tiny_evidence(), disablement_intervention(m, 0));
    ASSERT_EQ(dist.probability.size(), 2u);
    EXPECT_NEAR(dist.at(0), 0.773756, 1e-6);
    EXPECT_NEAR(dist.at(0), 0.171 / 0.221, 1e-12);
    EXPECT_NEAR(dist.evidence_probability, 0.221, 1e-15);
}

TEST(Counterfactual, MatchesFullLatentBruteForce) {
    const Model m(two_disease_net());
    Evidence ev;
    ev.positive = {"S1", "S2"};
    ev.negative = {"S3"};
    for (std::size_t k = 0; k < 2; ++k) {
        for (const auto& iv : {disablement_intervention(m, k), sufficiency_intervention(m, k, m.resolve(ev).positive)}) {
            const auto a = counterfactual_query(m, ev, iv);
            const auto b = counterfactual_query_brute_force(m, ev, iv);
            ASSERT_EQ(a.probability.size(), b.probability.size());
            for (std::size_t i = 0; i < a.probability.size(); ++i) EXPECT_NEAR(a.probability[i], b.probability[i], 1e-13);
        }
    }
}

TEST(Counterfactual, NoEvidencedDescendantsLeavesEvidenceUnchanged) {
    // S3's only parent is D2, so turning D1 off cannot change it.
    const Model m(two_disease_net());
    Evidence ev;
    ev.negative = {"S3"};
    const auto dist = counterfactual_query(m, ev, disablement_intervention(m, 0));
    EXPECT_NEAR(dist.at(0), 1.0, 1e-15);
    EXPECT_EQ(dist.at(1), 0.0);
}

TEST(Counterfactual, DisablementNeverSwitchesSymptomsOn) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const Model m(random_small_network(SmallNetConfig{}, seed));
        Rng rng(seed);
        const auto ev = random_evidence(m, rng, {0.4, 0.4, 0.5});
        const auto obs = m.resolve(ev);
        for (std::size_t k = 0; k < m.num_diseases(); ++k) {
            const auto dist = counterfactual_query(m, ev, disablement_intervention(m, k));
            for (std::uint64_t state = 0; state < dist.probability.size(); ++state) {
                bool violates = false;
                for (std::size_t i = 0; i < dist.symptoms.size(); ++i) {
                    const bool positive = std::count(obs.positive.begin(), obs.positive.end(), dist.symptoms[i]) > 0;
                    if (!positive && ((state >> i) & 1U)) violates = true;
                }
                if (violates) EXPECT_EQ(dist.probability[state], 0.0) << seed << ' ' << k << ' ' << state;
            }
        }
    }
}

TEST(Counterfactual, ZeroLikelihoodAndCaps) {
    NoisyOrNetwork net;
    net.diseases.push_back({"D", 1.0, {}});
    net.symptoms.push_back({"S", 1.0, {{"D", 0.5}}});
    const Model m(net);
    Evidence ev;
    ev.positive = {"S"};
    EXPECT_THROW(counterfactual_query(m, ev, Intervention{}), ZeroLikelihood);

    const Model big(synthetic_network(SyntheticConfig{0, 30, 30}, 2));
    Evidence e2;
    e2.positive = {big.symptom_id(0)};
    EXPECT_THROW(counterfactual_query(big, e2, Intervention{}), CapExceeded);
}

TEST(TwinNetwork, EmptyInterventionMergesEverything) {
    const Model m(two_disease_net());
    const auto twin = build_twin_network(m, Intervention{});
    EXPECT_TRUE(twin.ids(TwinNodeKind::dual_symptom).empty());
    EXPECT_TRUE(twin.ids(TwinNodeKind::intervened_disease).empty());
    EXPECT_EQ(twin.nodes.size(), 1u + 2u + 3u);
}

TEST(TwinNetwork, OnlyChildrenOfIntervenedDiseaseKeepDuals) {
    const Model m(two_disease_net());
    const auto twin = build_twin_network(m, disablement_intervention(m, 1));  // D2
    EXPECT_EQ(twin.ids(TwinNodeKind::dual_symptom), (std::vector<std::string>{"S2*", "S3*"}));
    ASSERT_NE(twin.find("D2*"), nullptr);
    EXPECT_TRUE(twin.find("D2*")->parents.empty());
    EXPECT_EQ(twin.find("S2*")->parents, (std::vector<std::string>{"D1", "D2*"}));
    EXPECT_EQ(twin.shared_latents.at("S2*"), "S2");
}

TEST(TwinNetwork, SufficiencyShape) {
    // Every disease but D1 intervened: D1 is the only disease shared between
    // the factual and counterfactual symptoms.
    const Model m(two_disease_net());
    Evidence ev;
    ev.positive = {"S1", "S2"};
    const auto twin = build_twin_network(m, sufficiency_intervention(m, 0, m.resolve(ev).positive), &ev);
    EXPECT_EQ(twin.ids(TwinNodeKind::intervened_disease), (std::vector<std::string>{"D2*"}));
    EXPECT_EQ(twin.ids(TwinNodeKind::dual_symptom), (std::vector<std::string>{"S1*", "S2*"}));
    EXPECT_EQ(twin.find("S3"), nullptr);  // pruned, no evidence
    for (const auto& id : twin.ids(TwinNodeKind::dual_symptom)) {
        EXPECT_FALSE(twin.find(id)->leak_active);
        for (const auto& p : twin.find(id)->parents) EXPECT_TRUE(p == "D1" || p == "D2*");
    }
}

TEST(TwinNetwork, DotExport) {
    const Model m(tiny_net());
    const auto dot = to_dot(build_twin_network(m, disablement_intervention(m, 0)));
    EXPECT_NE(dot.find("digraph twin"), std::string::npos);
    EXPECT_NE(dot.find("\"D*\""), std::string::npos);
    EXPECT_NE(dot.find("\"D*\" -> \"S*\""), std::string::npos);
    EXPECT_NE(dot.find("style=dashed"), std::string::npos);
}

TEST(TwinNetwork, TwinInferenceEqualsAbduction) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const Model m(random_small_network(SmallNetConfig{}, seed));
        Rng rng(seed + 7);
        const auto ev = random_evidence(m, rng);
        const auto pos = m.resolve(ev).positive;
        for (std::size_t k = 0; k < m.num_diseases(); ++k) {
            for (const auto& iv : {disablement_intervention(m, k), sufficiency_intervention(m, k, pos), Intervention{}}) {
                const auto a = counterfactual_query(m, ev, iv);
                const auto t = counterfactual_query_twin(m, build_twin_network(m, iv, &ev), ev);
                ASSERT_EQ(a.probability.size(), t.probability.size());
                for (std::size_t i = 0; i < a.probability.size(); ++i)
                    EXPECT_NEAR(a.probability[i], t.probability[i], 1e-12) << seed << ' ' << k;
            }
        }
    }
}

TEST(DualCpt, TinyNetDisablement) {
    const Model m(tiny_net());
    const auto cpt = dual_symptom_cpt(m, "S", {{"D", 1}}, DualIntervention::disablement, "D");
    EXPECT_NEAR(cpt.at(1, 0), 1.5 * 0.38, 1e-15);
    EXPECT_NEAR(cpt.at(0, 0), 0.38, 1e-15);
    EXPECT_EQ(cpt.at(0, 1), 0.0);
    EXPECT_NEAR(cpt.at(1, 1), 0.05, 1e-15);
}

TEST(DualCpt, SufficiencyCases) {
    const Model m(two_disease_net());
    const auto off = dual_symptom_cpt(m, "S2", {{"D1", 0}, {"D2", 1}}, DualIntervention::sufficiency, "D1");
    EXPECT_EQ(off.at(1, 1), 0.0);
    const auto on = dual_symptom_cpt(m, "S2", {{"D1", 1}, {"D2", 1}}, DualIntervention::sufficiency, "D1");
    EXPECT_NEAR(on.at(1, 1), 1.0 - 0.6, 1e-15);
    EXPECT_THROW(dual_symptom_cpt(m, "S2", {{"D1", 1}}, DualIntervention::sufficiency, "D1"), InvalidArgument);
}

TEST(DualCpt, MatchesSharedLatentEnumeration) {
    // Closed-form tables against direct enumeration of the symptom's latents,
    // for every parent configuration of every symptom; rows also marginalise
    // to the factual conditional.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Model m(random_small_network(SmallNetConfig{}, seed));
        for (std::size_t s = 0; s < m.num_symptoms(); ++s) {
            const auto& parents = m.symptom_parents(s);
            for (std::uint64_t cfg = 0; cfg < (std::uint64_t{1} << parents.size()); ++cfg) {
                std::map<std::string, int> states;
                std::vector<std::uint8_t> d(m.num_diseases(), 0);
                for (std::size_t i = 0; i < parents.size(); ++i) {
                    const int v = (cfg >> i) & 1U;
                    states[m.disease_id(parents[i].node)] = v;
                    d[parents[i].node] = v;
                }
                double factual_off = m.symptom_leak(s);
                for (const auto& e : parents)
                    if (d[e.node]) factual_off *= e.lambda;
                for (std::size_t k = 0; k < m.num_diseases(); ++k) {
                    auto d_dis = d;
                    d_dis[k] = 0;
                    std::vector<std::uint8_t> d_suf(m.num_diseases(), 0);
                    d_suf[k] = d[k];
                    const auto dis = dual_symptom_cpt(m, m.symptom_id(s), states, DualIntervention::disablement, m.disease_id(k));
                    const auto suf = dual_symptom_cpt(m, m.symptom_id(s), states, DualIntervention::sufficiency, m.disease_id(k));
                    const auto e_dis = detail::shared_latent_pair(m, s, d, d_dis, true);
                    const auto e_suf = detail::shared_latent_pair(m, s, d, d_suf, false);
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b) {
                            EXPECT_NEAR(dis.at(a, b), e_dis[a][b], 1e-14);
                            EXPECT_NEAR(suf.at(a, b), e_suf[a][b], 1e-14);
                        }
                    EXPECT_NEAR(dis.at(0, 0) + dis.at(0, 1), factual_off, 1e-14);
                    EXPECT_NEAR(suf.at(1, 0) + suf.at(1, 1), 1.0 - factual_off, 1e-14);
                }
            }
        }
    }
}

TEST(MeasureOracle, TinyNet) {
    const Model m(tiny_net());
    EXPECT_NEAR(measure_oracle(m, tiny_evidence(), "D", MeasureKind::sufficiency), 0.814480, 1e-6);
    EXPECT_NEAR(measure_oracle(m, tiny_evidence(), "D", MeasureKind::disablement), 0.773756, 1e-6);
    EXPECT_NEAR(measure_oracle(m, tiny_evidence(), "D", MeasureKind::posterior), 0.841629, 1e-6);
}

TEST(MeasureOracle, ZeroPosteriorGivesZero) {
    auto net = two_disease_net();
    net.diseases[0].leak = 1.0;  // D1 only through R
    const Model m(net);
    Evidence ev;
    ev.risks = {{"R", 0}};
    ev.positive = {"S2"};
    EXPECT_EQ(measure_oracle(m, ev, "D1", MeasureKind::posterior), 0.0);
    EXPECT_EQ(measure_oracle(m, ev, "D1", MeasureKind::sufficiency), 0.0);
    EXPECT_EQ(measure_oracle(m, ev, "D1", MeasureKind::disablement), 0.0);
}

TEST(MeasureOracle, AgreesWithClosedFormsAndBruteForce) {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const auto net = random_small_network(SmallNetConfig{}, seed);
        const Model m(net);
        Rng rng(seed + 99);
        const auto ev = random_evidence(m, rng);
        const auto s = score_evidence(m, ev);
        for (std::size_t k = 0; k < m.num_diseases(); ++k) {
            const auto& id = m.disease_id(k);
            EXPECT_LT(rel_dev(s.sufficiency[k], measure_oracle(m, ev, id, MeasureKind::sufficiency)), 1e-9) << seed;
            EXPECT_LT(rel_dev(s.disablement[k], measure_oracle(m, ev, id, MeasureKind::disablement)), 1e-9) << seed;
            EXPECT_LT(rel_dev(s.posterior[k], measure_oracle(m, ev, id, MeasureKind::posterior)), 1e-9) << seed;
        }
        if (seed < 8) {
            SmallNetConfig small;
            small.max_diseases = 2;
            small.max_symptoms = 3;
            small.max_risks = 1;
            const auto tnet = random_small_network(small, seed);
            const Model tm(tnet);
            Rng r2(seed);
            const auto tev = random_evidence(tm, r2);
            const auto truth = brute_force(tnet, tev);
            for (std::size_t k = 0; k < tm.num_diseases(); ++k) {
                const auto& id = tm.disease_id(k);
                EXPECT_LT(rel_dev(measure_oracle(tm, tev, id, MeasureKind::sufficiency), truth.sufficiency.at(id)), 1e-12);
                EXPECT_LT(rel_dev(measure_oracle(tm, tev, id, MeasureKind::disablement), truth.disablement.at(id)), 1e-12);
            }
        }
    }
}

TEST(MeasureOracle, NegativeSymptomLeaksDoNotMatter) {
    // Switching off the leaks of every symptom, not only the positive ones,
    // leaves expected sufficiency unchanged.
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const Model m(random_small_network(SmallNetConfig{}, seed));
        Rng rng(seed + 3);
        const auto ev = random_evidence(m, rng, {0.3, 0.5, 0.5});
        for (std::size_t k = 0; k < m.num_diseases(); ++k) {
            const auto& id = m.disease_id(k);
            const double pos = measure_oracle(m, ev, id, MeasureKind::sufficiency, {}, LeakScope::positive_symptoms);
            const double all = measure_oracle(m, ev, id, MeasureKind::sufficiency, {}, LeakScope::all_symptoms);
            EXPECT_NEAR(pos, all, 1e-14) << seed;
        }
    }
}

TEST(Posteriors, JointTableMatchesClosedForm) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const Model m(random_small_network(SmallNetConfig{}, seed));
        Rng rng(seed + 5);
        const auto ev = random_evidence(m, rng);
        const auto joint = posteriors_from_joint(m, enumerate_joint(m), ev);
        for (std::size_t k = 0; k < m.num_diseases(); ++k)
            EXPECT_NEAR(disease_posterior(m, ev, m.disease_id(k)), joint.posterior[k], 1e-9);
        EXPECT_NEAR(evidence_likelihood(m, ev), joint.likelihood, 1e-12);
    }
}
