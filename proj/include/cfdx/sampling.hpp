#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfdx/errors.hpp"
#include "cfdx/model.hpp"
#include "cfdx/rng.hpp"

namespace cfdx {

// Values of every observed node, in model index order.
struct FullAssignment {
    std::vector<std::uint8_t> risks;
    std::vector<std::uint8_t> diseases;
    std::vector<std::uint8_t> symptoms;

    friend bool operator==(const FullAssignment&, const FullAssignment&) = default;
};

inline constexpr std::size_t default_max_rejections = 1'000'000;

namespace detail {

// Runs a noisy-OR structural equation, drawing each noise bit independently:
// the leak fires unless u_L = 1, an on parent fires unless its u = 1.
template <typename ParentValue>
std::uint8_t sample_noisy_or(Rng& rng, double leak, const std::vector<IndexedEdge>& parents, ParentValue&& value_of) {
    bool on = !rng.bernoulli(leak);
    for (const auto& e : parents) {
        const bool fails = rng.bernoulli(e.lambda);
        if (value_of(e.node) && !fails) on = true;
    }
    return on ? 1 : 0;
}

}  // namespace detail

// Draws a full assignment from the structural equations. With `forced`, the
// risk factors are drawn from P(R | D_forced = 1): only the forced disease's
// risk parents are reweighted, by enumerating their joint states with weight
// prior * P(D_forced = 1 | parents). Other diseases depend on the forced one
// only through the shared risks, so the rest is drawn once, as usual. A forced
// disease with more than 20 risk parents falls back to rejection.
inline FullAssignment ancestral_sample(const Model& model, Rng& rng, std::optional<std::size_t> forced = std::nullopt,
                                       std::size_t max_rejections = default_max_rejections) {
    FullAssignment out;
    out.risks.assign(model.num_risks(), 0);
    out.diseases.assign(model.num_diseases(), 0);
    out.symptoms.assign(model.num_symptoms(), 0);

    auto draw_risks = [&] {
        for (std::size_t r = 0; r < model.num_risks(); ++r) out.risks[r] = rng.bernoulli(model.risk_prior(r)) ? 1 : 0;
    };
    auto draw_disease = [&](std::size_t d) {
        out.diseases[d] = detail::sample_noisy_or(rng, model.disease_leak(d), model.disease_parents(d),
                                                  [&](std::size_t r) { return out.risks[r] == 1; });
    };

    if (forced) {
        if (*forced >= model.num_diseases()) throw InvalidArgument("forced disease index out of range");
        const auto& parents = model.disease_parents(*forced);
        const std::string not_on = "disease '" + model.disease_id(*forced) + "' cannot be on";
        if (parents.size() <= 20) {
            std::vector<double> cumulative(std::size_t{1} << parents.size());
            double total = 0.0;
            for (std::uint64_t cfg = 0; cfg < cumulative.size(); ++cfg) {
                double w = 1.0, off = model.disease_leak(*forced);
                for (std::size_t i = 0; i < parents.size(); ++i) {
                    const double prior = model.risk_prior(parents[i].node);
                    if ((cfg >> i) & 1U) {
                        w *= prior;
                        off *= parents[i].lambda;
                    } else {
                        w *= 1.0 - prior;
                    }
                }
                total += w * (1.0 - off);
                cumulative[cfg] = total;
            }
            if (!(total > 0.0)) throw SamplingError(not_on);
            draw_risks();
            const double u = rng.uniform() * total;
            auto cfg = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
            cfg = std::min(cfg, cumulative.size() - 1);
            while (cumulative[cfg] == (cfg ? cumulative[cfg - 1] : 0.0)) --cfg;  // never land on a zero-weight state
            for (std::size_t i = 0; i < parents.size(); ++i) out.risks[parents[i].node] = (cfg >> i) & 1U;
            out.diseases[*forced] = 1;
        } else {
            std::size_t attempts = 0;
            for (;;) {
                draw_risks();
                draw_disease(*forced);
                if (out.diseases[*forced] == 1) break;
                if (++attempts >= max_rejections)
                    throw SamplingError(not_on + " after " + std::to_string(max_rejections) + " attempts");
            }
        }
    } else {
        draw_risks();
    }
    for (std::size_t d = 0; d < model.num_diseases(); ++d) {
        if (forced && d == *forced) continue;
        draw_disease(d);
    }
    for (std::size_t s = 0; s < model.num_symptoms(); ++s) {
        out.symptoms[s] = detail::sample_noisy_or(rng, model.symptom_leak(s), model.symptom_parents(s),
                                                  [&](std::size_t d) { return out.diseases[d] == 1; });
    }
    return out;
}

inline FullAssignment ancestral_sample(const Model& model, std::uint64_t seed,
                                       const std::optional<std::string>& forced = std::nullopt,
                                       std::size_t max_rejections = default_max_rejections) {
    Rng rng(seed);
    std::optional<std::size_t> index;
    if (forced) index = model.index_of(*forced, Layer::disease);
    return ancestral_sample(model, rng, index, max_rejections);
}

}  // namespace cfdx
