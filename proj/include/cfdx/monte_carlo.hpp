#pragma once

// Likelihood-weighted Monte Carlo over the twin network. Proposal: the prior
// over risks and diseases (observed risks clamped); weight: the probability of
// the symptom evidence given the sampled diseases. Each evidenced positive
// symptom's latents are then drawn from their posterior given s = 1, and its
// dual is evaluated on the same latents. The estimate is self-normalised:
//   mu = sum w f / sum w,   se^2 = sum w^2 (f - mu)^2 / (sum w)^2.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cfdx/errors.hpp"
#include "cfdx/measures.hpp"
#include "cfdx/model.hpp"
#include "cfdx/parallel.hpp"
#include "cfdx/rng.hpp"

namespace cfdx {

struct McOptions {
    unsigned threads = 1;
    std::size_t chunks = 64;       // fixed split, so results do not depend on threads
    double min_effective_samples = 100.0;
};

struct McEstimate {
    MeasureKind kind = MeasureKind::posterior;
    double estimate = 0.0;
    double standard_error = 0.0;
    double effective_samples = 0.0;
    std::size_t samples = 0;
    bool low_ess_warning = false;
};

namespace detail {

struct McMoments {
    double w = 0.0, w2 = 0.0;
    double wf[3] = {0, 0, 0};
    double w2f[3] = {0, 0, 0};
    double w2f2[3] = {0, 0, 0};

    void add(const McMoments& o) {
        w += o.w;
        w2 += o.w2;
        for (int i = 0; i < 3; ++i) {
            wf[i] += o.wf[i];
            w2f[i] += o.w2f[i];
            w2f2[i] += o.w2f2[i];
        }
    }
};

// Draws the failure bits of `fail_prob` conditioned on not all of them
// failing. Bit i fails with probability f_i (1 - Q_{>i}) / (1 - f_i Q_{>i})
// while no earlier bit has succeeded, where Q_{>i} is the product of the
// later failure probabilities; after a success the rest are unconditioned.
inline void draw_not_all_fail(Rng& rng, const std::vector<double>& fail_prob, std::vector<std::uint8_t>& fails,
                              std::vector<double>& suffix) {
    const std::size_t n = fail_prob.size();
    suffix.assign(n + 1, 1.0);
    for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] * fail_prob[i];
    fails.assign(n, 0);
    bool succeeded = false;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = fail_prob[i];
        double p_fail = f;
        if (!succeeded) {
            const double denom = 1.0 - f * suffix[i + 1];
            p_fail = denom > 0.0 ? f * (1.0 - suffix[i + 1]) / denom : 0.0;
        }
        fails[i] = rng.bernoulli(p_fail);
        if (!fails[i]) succeeded = true;
    }
}

}  // namespace detail

// Estimates of all three measures of `disease` from one set of samples.
inline std::vector<McEstimate> mc_estimate_measures(const Model& model, const Evidence& evidence,
                                                    const std::string& disease, std::size_t n_samples,
                                                    std::uint64_t seed, const McOptions& opts = {}) {
    if (n_samples == 0) throw InvalidArgument("n_samples must be at least 1");
    const std::size_t k = model.index_of(disease, Layer::disease);
    const auto ev = model.resolve(evidence);
    const std::size_t nd = model.num_diseases();
    const std::size_t chunks = std::max<std::size_t>(1, std::min(opts.chunks, n_samples));

    std::vector<detail::McMoments> moments(chunks);
    parallel_for(chunks, opts.threads, [&](std::size_t c) {
        Rng rng(derive_seed(seed, c));
        const std::size_t count = n_samples / chunks + (c < n_samples % chunks ? 1 : 0);
        std::vector<int> risks(model.num_risks());
        std::vector<std::uint8_t> d(nd), fails;
        std::vector<double> fail_prob, suffix;
        std::vector<std::size_t> owner;  // disease behind each fail_prob entry; SIZE_MAX = leak
        detail::McMoments m;
        for (std::size_t i = 0; i < count; ++i) {
            for (std::size_t r = 0; r < risks.size(); ++r)
                risks[r] = ev.risk_state[r] >= 0 ? ev.risk_state[r] : (rng.bernoulli(model.risk_prior(r)) ? 1 : 0);
            for (std::size_t j = 0; j < nd; ++j) d[j] = rng.bernoulli(model.disease_activation(j, risks));

            double w = 1.0;
            for (auto s : ev.negative) {
                double off = model.symptom_leak(s);
                for (const auto& e : model.symptom_parents(s))
                    if (d[e.node]) off *= e.lambda;
                w *= off;
            }
            int disabled = 0, sufficient = 0;
            for (auto s : ev.positive) {
                fail_prob.clear();
                owner.clear();
                fail_prob.push_back(model.symptom_leak(s));
                owner.push_back(SIZE_MAX);
                for (const auto& e : model.symptom_parents(s)) {
                    if (!d[e.node]) continue;
                    fail_prob.push_back(e.lambda);
                    owner.push_back(e.node);
                }
                double all_fail = 1.0;
                for (double f : fail_prob) all_fail *= f;
                w *= 1.0 - all_fail;
                if (w == 0.0) break;
                detail::draw_not_all_fail(rng, fail_prob, fails, suffix);
                // Duals on the shared latents: under do(D_k = 0) everything but
                // D_k's edge survives; under sufficiency only D_k's edge does.
                bool on_without_k = false, on_by_k = false;
                for (std::size_t b = 0; b < fails.size(); ++b) {
                    if (fails[b]) continue;
                    if (owner[b] == k) {
                        on_by_k = true;
                    } else {
                        on_without_k = true;
                    }
                }
                if (!on_without_k) ++disabled;
                if (on_by_k) ++sufficient;
            }
            if (w == 0.0) continue;
            const double f[3] = {static_cast<double>(d[k]), static_cast<double>(sufficient),
                                 static_cast<double>(disabled)};
            m.w += w;
            m.w2 += w * w;
            for (int t = 0; t < 3; ++t) {
                m.wf[t] += w * f[t];
                m.w2f[t] += w * w * f[t];
                m.w2f2[t] += w * w * f[t] * f[t];
            }
        }
        moments[c] = m;
    });

    detail::McMoments total;
    for (const auto& m : moments) total.add(m);
    if (!(total.w > 0.0))
        throw SamplingError("every sample had zero weight; the evidence is impossible or too unlikely to sample");

    std::vector<McEstimate> out;
    for (int t = 0; t < 3; ++t) {
        McEstimate e;
        e.kind = all_measures[t];
        e.samples = n_samples;
        e.estimate = total.wf[t] / total.w;
        const double mu = e.estimate;
        const double var = std::max(0.0, total.w2f2[t] - 2.0 * mu * total.w2f[t] + mu * mu * total.w2);
        e.standard_error = std::sqrt(var) / total.w;
        e.effective_samples = total.w * total.w / total.w2;
        e.low_ess_warning = e.effective_samples < opts.min_effective_samples;
        out.push_back(e);
    }
    return out;
}

inline McEstimate mc_estimate_measure(const Model& model, const Evidence& evidence, const std::string& disease,
                                      MeasureKind kind, std::size_t n_samples, std::uint64_t seed,
                                      const McOptions& opts = {}) {
    const auto all = mc_estimate_measures(model, evidence, disease, n_samples, seed, opts);
    return all[static_cast<std::size_t>(kind)];
}

}  // namespace cfdx
