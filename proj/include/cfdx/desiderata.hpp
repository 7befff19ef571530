#pragma once

// Randomised check of the properties the counterfactual measures must have,
// on networks small enough for the enumeration oracle:
//   causality-zero       no positive finding descends from D  =>  measure 0
//   simplicity bound     0 <= measure <= P(D | E) * |S+ n Ch(D)|
//   consistency-at-zero  P(D | E) = 0  =>  measure 0
//   posterior recovery   unit weights give back the posterior
//   oracle agreement     closed forms equal the counterfactual definitions

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "cfdx/exact.hpp"
#include "cfdx/measures.hpp"
#include "cfdx/model.hpp"
#include "cfdx/rng.hpp"
#include "cfdx/synthetic.hpp"
#include "cfdx/twin.hpp"

namespace cfdx {

struct DesiderataConfig {
    std::size_t trials = 500;
    std::uint64_t seed = 0;
    SmallNetConfig nets;
    RandomEvidenceConfig evidence;
    double zero_tolerance = 1e-12;
    double relative_tolerance = 1e-9;
};

// lambda close to 1 everywhere: every cause is weak, so the signed subset sums
// cancel almost completely.
inline DesiderataConfig adversarial_desiderata_config() {
    DesiderataConfig c;
    c.nets.lambda_lo = 0.95;
    c.nets.lambda_hi = 0.9999;
    return c;
}

struct PropertyCheck {
    std::string name;
    std::size_t checked = 0;
    std::size_t violations = 0;
    double worst_deviation = 0.0;

    void record(double deviation, double tolerance) {
        ++checked;
        worst_deviation = std::max(worst_deviation, deviation);
        if (!(deviation <= tolerance)) ++violations;
    }

    friend bool operator==(const PropertyCheck&, const PropertyCheck&) = default;
};

struct DesiderataReport {
    std::size_t trials = 0;
    std::uint64_t seed = 0;
    std::vector<PropertyCheck> checks;

    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const PropertyCheck& c) { return c.violations == 0; });
    }

    const PropertyCheck& check(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return c;
        throw InvalidArgument("no property check named '" + name + "'");
    }
};

inline nlohmann::json to_json(const DesiderataReport& r) {
    nlohmann::json j = {{"trials", r.trials}, {"seed", r.seed}, {"passed", r.passed()}};
    j["checks"] = nlohmann::json::array();
    for (const auto& c : r.checks)
        j["checks"].push_back({{"name", c.name},
                               {"checked", c.checked},
                               {"violations", c.violations},
                               {"worst_deviation", c.worst_deviation}});
    return j;
}

// |a - b| relative to |b|, or absolute when b is near zero.
inline double relative_deviation(double a, double b, double floor = 1e-3) {
    return std::fabs(a - b) / std::max(std::fabs(b), floor);
}

// One random network and evidence per trial. Every trial also plants a disease
// that cannot be present (no leak, risk parents observed off), so
// consistency-at-zero is always exercised.
inline DesiderataReport desiderata_report(const DesiderataConfig& cfg) {
    if (cfg.trials == 0) throw InvalidArgument("trials must be at least 1");
    DesiderataReport rep;
    rep.trials = cfg.trials;
    rep.seed = cfg.seed;
    PropertyCheck causality{"causality_zero"}, simplicity{"simplicity_bound"}, consistency{"consistency_at_zero"},
        recovery{"posterior_recovery"}, oracle{"oracle_agreement"};

    InferenceOptions unit;
    unit.weights = MeasureWeights::unit;
    for (std::size_t t = 0; t < cfg.trials; ++t) {
        Rng rng(derive_seed(cfg.seed, t));
        NoisyOrNetwork net = random_small_network(cfg.nets, rng.next());
        const std::size_t planted = rng.below(net.diseases.size());
        net.diseases[planted].leak = 1.0;
        const Model model(net);
        Evidence ev = random_evidence(model, rng, cfg.evidence);
        for (const auto& e : net.diseases[planted].parents) ev.risks[e.id] = 0;

        const auto resolved = model.resolve(ev);
        const auto scores = score_evidence(model, resolved);
        if (scores.zero_likelihood) continue;  // cannot happen with leaky symptoms
        const auto unit_scores = score_evidence(model, resolved, std::nullopt, unit);

        for (std::size_t k = 0; k < model.num_diseases(); ++k) {
            const double post = scores.posterior[k];
            const double suff = scores.sufficiency[k];
            const double dis = scores.disablement[k];
            std::size_t children = 0;
            for (auto s : resolved.positive)
                if (model.lambda(k, s) < 1.0) ++children;

            if (children == 0) {
                causality.record(std::max(std::fabs(suff), std::fabs(dis)), cfg.zero_tolerance);
            }
            const double bound = post * static_cast<double>(children);
            const double slack = cfg.zero_tolerance + cfg.relative_tolerance * bound;
            simplicity.record(std::max({suff - bound, dis - bound, -suff, -dis, 0.0}), slack);
            if (k == planted) {
                consistency.record(std::max({std::fabs(post), std::fabs(suff), std::fabs(dis)}), cfg.zero_tolerance);
            }
            recovery.record(std::max(std::fabs(unit_scores.sufficiency[k] - post), std::fabs(unit_scores.disablement[k] - post)),
                            cfg.zero_tolerance);

            const auto& id = model.disease_id(k);
            const double o_suff = measure_oracle(model, ev, id, MeasureKind::sufficiency);
            const double o_dis = measure_oracle(model, ev, id, MeasureKind::disablement);
            auto dev = [&](double a, double b) {
                return std::fabs(a - b) <= cfg.zero_tolerance ? 0.0 : relative_deviation(a, b, 1e-300);
            };
            oracle.record(std::max(dev(suff, o_suff), dev(dis, o_dis)), cfg.relative_tolerance);
        }
    }
    rep.checks = {causality, simplicity, consistency, recovery, oracle};
    return rep;
}

}  // namespace cfdx
