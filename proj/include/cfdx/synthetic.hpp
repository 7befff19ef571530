#pragma once

// Random networks and evidence for benchmarks, property tests and the
// desiderata report. All draws come from one seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"

#include "cfdx/errors.hpp"
#include "cfdx/model.hpp"
#include "cfdx/rng.hpp"

namespace cfdx {

// Benchmark-scale networks. Disease base activations (1 - leak) are
// log-uniform so marginals spread over several orders of magnitude.
struct SyntheticConfig {
    std::size_t risks = 10;
    std::size_t diseases = 30;
    std::size_t symptoms = 50;
    double min_base_activation = 1e-6;
    double max_base_activation = 0.1;
    std::size_t max_risk_parents = 3;
    double risk_lambda_lo = 0.9, risk_lambda_hi = 0.99;
    double risk_prior_lo = 0.05, risk_prior_hi = 0.5;
    std::size_t min_children = 3, max_children = 8;
    double symptom_lambda_lo = 0.05, symptom_lambda_hi = 0.9;
    double symptom_leak_lo = 0.9, symptom_leak_hi = 0.999;
    // Fraction of diseases with no spontaneous onset (leak = 1): they occur
    // only through their risk factors.
    double unleaked_disease_fraction = 0.0;
};

inline nlohmann::json to_json(const SyntheticConfig& c) {
    return {{"risks", c.risks},
            {"diseases", c.diseases},
            {"symptoms", c.symptoms},
            {"min_base_activation", c.min_base_activation},
            {"max_base_activation", c.max_base_activation},
            {"max_risk_parents", c.max_risk_parents},
            {"risk_lambda", {c.risk_lambda_lo, c.risk_lambda_hi}},
            {"risk_prior", {c.risk_prior_lo, c.risk_prior_hi}},
            {"children", {c.min_children, c.max_children}},
            {"symptom_lambda", {c.symptom_lambda_lo, c.symptom_lambda_hi}},
            {"symptom_leak", {c.symptom_leak_lo, c.symptom_leak_hi}},
            {"unleaked_disease_fraction", c.unleaked_disease_fraction}};
}

inline std::string padded_id(char prefix, std::size_t i, std::size_t n) {
    const int width = n < 10 ? 1 : (n < 100 ? 2 : (n < 1000 ? 3 : 6));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, i + 1);
    return buf;
}

namespace detail {

// k distinct indices from [0, n), sorted.
inline std::vector<std::size_t> choose(Rng& rng, std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    k = std::min(k, n);
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

}  // namespace detail

inline NoisyOrNetwork synthetic_network(const SyntheticConfig& c, std::uint64_t seed) {
    if (c.diseases == 0 || c.symptoms == 0) throw InvalidArgument("synthetic network needs diseases and symptoms");
    if (c.min_base_activation <= 0.0 || c.max_base_activation >= 1.0 || c.min_base_activation > c.max_base_activation)
        throw InvalidArgument("base activation range must lie in (0, 1)");
    if (c.min_children > c.max_children) throw InvalidArgument("min_children exceeds max_children");
    Rng rng(seed);
    NoisyOrNetwork net;
    for (std::size_t r = 0; r < c.risks; ++r)
        net.risk_factors.push_back({padded_id('R', r, c.risks), rng.uniform(c.risk_prior_lo, c.risk_prior_hi)});

    const double log_lo = std::log(c.min_base_activation), log_hi = std::log(c.max_base_activation);
    std::vector<std::vector<ParentEdge>> symptom_parents(c.symptoms);
    for (std::size_t d = 0; d < c.diseases; ++d) {
        Disease dis;
        dis.id = padded_id('D', d, c.diseases);
        const bool unleaked = rng.uniform() < c.unleaked_disease_fraction;
        dis.leak = 1.0 - std::exp(rng.uniform(log_lo, log_hi));
        if (unleaked) dis.leak = 1.0;
        const std::size_t n_par = detail::between(rng, 0, std::min(c.max_risk_parents, c.risks));
        for (auto r : detail::choose(rng, c.risks, n_par))
            dis.parents.push_back({net.risk_factors[r].id, rng.uniform(c.risk_lambda_lo, c.risk_lambda_hi)});
        const std::size_t n_child = detail::between(rng, std::min(c.min_children, c.symptoms), std::min(c.max_children, c.symptoms));
        for (auto s : detail::choose(rng, c.symptoms, n_child))
            symptom_parents[s].push_back({dis.id, rng.uniform(c.symptom_lambda_lo, c.symptom_lambda_hi)});
        net.diseases.push_back(std::move(dis));
    }
    for (std::size_t s = 0; s < c.symptoms; ++s)
        net.symptoms.push_back({padded_id('S', s, c.symptoms), rng.uniform(c.symptom_leak_lo, c.symptom_leak_hi),
                                std::move(symptom_parents[s])});
    return net;
}

// Small networks that the enumeration oracles can handle: sizes drawn up to
// the given maxima, every possible edge present with `edge_probability`, and
// every failure probability (edges and leaks) uniform in [lambda_lo, lambda_hi].
struct SmallNetConfig {
    std::size_t max_risks = 3;
    std::size_t max_diseases = 4;
    std::size_t max_symptoms = 5;
    double edge_probability = 0.6;
    double lambda_lo = 0.05, lambda_hi = 0.99;
    double prior_lo = 0.05, prior_hi = 0.95;
    double unleaked_disease_fraction = 0.1;
};

inline NoisyOrNetwork random_small_network(const SmallNetConfig& c, std::uint64_t seed) {
    if (c.max_diseases == 0 || c.max_symptoms == 0) throw InvalidArgument("small network needs diseases and symptoms");
    Rng rng(seed);
    const std::size_t nr = detail::between(rng, 0, c.max_risks);
    const std::size_t nd = detail::between(rng, 1, c.max_diseases);
    const std::size_t ns = detail::between(rng, 1, c.max_symptoms);
    NoisyOrNetwork net;
    for (std::size_t r = 0; r < nr; ++r) net.risk_factors.push_back({padded_id('R', r, nr), rng.uniform(c.prior_lo, c.prior_hi)});
    for (std::size_t d = 0; d < nd; ++d) {
        Disease dis;
        dis.id = padded_id('D', d, nd);
        dis.leak = rng.uniform() < c.unleaked_disease_fraction ? 1.0 : rng.uniform(c.lambda_lo, c.lambda_hi);
        for (std::size_t r = 0; r < nr; ++r)
            if (rng.uniform() < c.edge_probability)
                dis.parents.push_back({net.risk_factors[r].id, rng.uniform(c.lambda_lo, c.lambda_hi)});
        net.diseases.push_back(std::move(dis));
    }
    for (std::size_t s = 0; s < ns; ++s) {
        Symptom sym;
        sym.id = padded_id('S', s, ns);
        sym.leak = rng.uniform(c.lambda_lo, c.lambda_hi);
        for (std::size_t d = 0; d < nd; ++d)
            if (rng.uniform() < c.edge_probability)
                sym.parents.push_back({net.diseases[d].id, rng.uniform(c.lambda_lo, c.lambda_hi)});
        net.symptoms.push_back(std::move(sym));
    }
    return net;
}

// Each symptom positive, negative or unobserved with the given probabilities;
// each risk observed with `risk_observed` (its value drawn from its prior).
// At least one positive symptom is always included.
struct RandomEvidenceConfig {
    double positive = 0.4;
    double negative = 0.3;
    double risk_observed = 0.5;
};

inline Evidence random_evidence(const Model& model, Rng& rng, const RandomEvidenceConfig& c = {}) {
    Evidence ev;
    for (std::size_t r = 0; r < model.num_risks(); ++r)
        if (rng.uniform() < c.risk_observed) ev.risks[model.risk_id(r)] = rng.bernoulli(model.risk_prior(r)) ? 1 : 0;
    for (std::size_t s = 0; s < model.num_symptoms(); ++s) {
        const double u = rng.uniform();
        if (u < c.positive) {
            ev.positive.insert(model.symptom_id(s));
        } else if (u < c.positive + c.negative) {
            ev.negative.insert(model.symptom_id(s));
        }
    }
    if (ev.positive.empty()) {
        const auto s = model.symptom_id(rng.below(model.num_symptoms()));
        ev.negative.erase(s);
        ev.positive.insert(s);
    }
    return ev;
}

}  // namespace cfdx
