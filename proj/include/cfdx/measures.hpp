#pragma once

// Counterfactual diagnostic measures in closed form. With A_k(Z) the signed
// numerator terms P(S- = 0, Z = 0, D_k = 1 | R):
//   E_suff(D_k) = sum_Z (-1)^|Z| A_k(Z) * sum_{S in S+ \ Z} (1 - lambda_{k,S})   / P(S+-|R)
//   E_dis(D_k)  = sum_Z (-1)^|Z| A_k(Z) * sum_{S in Z}      (1 - 1/lambda_{k,S}) / P(S+-|R)
// lambda_{k,S} is taken as 1 for symptoms that are not children of D_k.
// Replacing either weight by 1 gives back the posterior.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cfdx/errors.hpp"
#include "cfdx/exact.hpp"
#include "cfdx/model.hpp"

namespace cfdx {

enum class MeasureKind : std::uint8_t { posterior, sufficiency, disablement };

inline const char* to_string(MeasureKind kind) {
    switch (kind) {
        case MeasureKind::posterior: return "posterior";
        case MeasureKind::sufficiency: return "sufficiency";
        case MeasureKind::disablement: return "disablement";
    }
    return "?";
}

inline MeasureKind measure_from_string(const std::string& name) {
    if (name == "posterior") return MeasureKind::posterior;
    if (name == "sufficiency") return MeasureKind::sufficiency;
    if (name == "disablement") return MeasureKind::disablement;
    throw InvalidArgument("unknown measure '" + name + "' (expected posterior, sufficiency or disablement)");
}

inline constexpr MeasureKind all_measures[] = {MeasureKind::posterior, MeasureKind::sufficiency,
                                               MeasureKind::disablement};

struct MeasureValue {
    std::string disease;
    MeasureKind kind = MeasureKind::posterior;
    double value = 0.0;

    friend bool operator==(const MeasureValue&, const MeasureValue&) = default;
};

inline double pick(const ExactScores& scores, std::size_t t, MeasureKind kind) {
    switch (kind) {
        case MeasureKind::posterior: return scores.posterior[t];
        case MeasureKind::sufficiency: return scores.sufficiency[t];
        case MeasureKind::disablement: return scores.disablement[t];
    }
    return 0.0;
}

namespace detail {

inline MeasureValue single_measure(const Model& model, const Evidence& ev, const std::string& disease,
                                   MeasureKind kind, const InferenceOptions& opts) {
    const std::size_t k = model.index_of(disease, Layer::disease);
    const auto scores = score_evidence(model, model.resolve(ev), std::vector<std::size_t>{k}, opts);
    require_positive_likelihood(scores);
    return {disease, kind, pick(scores, 0, kind)};
}

}  // namespace detail

inline MeasureValue expected_sufficiency(const Model& model, const Evidence& ev, const std::string& disease,
                                         const InferenceOptions& opts = {}) {
    return detail::single_measure(model, ev, disease, MeasureKind::sufficiency, opts);
}

inline MeasureValue expected_disablement(const Model& model, const Evidence& ev, const std::string& disease,
                                         const InferenceOptions& opts = {}) {
    return detail::single_measure(model, ev, disease, MeasureKind::disablement, opts);
}

// ---------------------------------------------------------------------------
// Rankings

// Why two adjacent entries are ordered the way they are, recorded whenever the
// measure value alone did not decide it.
struct TieBreak {
    std::string higher;
    std::string lower;
    std::string rule;  // "posterior" or "id"

    friend bool operator==(const TieBreak&, const TieBreak&) = default;
};

struct RankedDisease {
    std::string disease;
    double value = 0.0;
    double posterior = 0.0;

    friend bool operator==(const RankedDisease&, const RankedDisease&) = default;
};

// Diseases sorted by measure value (descending), then posterior (descending),
// then id (ascending).
struct DiagnosisRanking {
    MeasureKind kind = MeasureKind::posterior;
    double likelihood = 0.0;
    std::vector<RankedDisease> entries;
    std::vector<TieBreak> tie_breaks;

    std::vector<MeasureValue> values() const {
        std::vector<MeasureValue> out;
        for (const auto& e : entries) out.push_back({e.disease, kind, e.value});
        return out;
    }

    // 1-based position of `disease`, or 0 if absent.
    std::size_t position_of(const std::string& disease) const {
        for (std::size_t i = 0; i < entries.size(); ++i)
            if (entries[i].disease == disease) return i + 1;
        return 0;
    }

    friend bool operator==(const DiagnosisRanking&, const DiagnosisRanking&) = default;
};

inline DiagnosisRanking rank_from_scores(const Model& model, const ExactScores& scores, MeasureKind kind) {
    require_positive_likelihood(scores);
    DiagnosisRanking out;
    out.kind = kind;
    out.likelihood = scores.likelihood;
    for (std::size_t t = 0; t < scores.diseases.size(); ++t)
        out.entries.push_back({model.disease_id(scores.diseases[t]), pick(scores, t, kind), scores.posterior[t]});
    std::sort(out.entries.begin(), out.entries.end(), [](const RankedDisease& a, const RankedDisease& b) {
        if (a.value != b.value) return a.value > b.value;
        if (a.posterior != b.posterior) return a.posterior > b.posterior;
        return a.disease < b.disease;
    });
    for (std::size_t i = 1; i < out.entries.size(); ++i) {
        const auto& a = out.entries[i - 1];
        const auto& b = out.entries[i];
        if (a.value != b.value) continue;
        out.tie_breaks.push_back({a.disease, b.disease, a.posterior != b.posterior ? "posterior" : "id"});
    }
    return out;
}

inline DiagnosisRanking rank_diseases(const Model& model, const Evidence& ev, MeasureKind kind,
                                      const InferenceOptions& opts = {}) {
    return rank_from_scores(model, score_evidence(model, model.resolve(ev), std::nullopt, opts), kind);
}

inline nlohmann::json to_json(const DiagnosisRanking& r) {
    nlohmann::json out;
    out["measure"] = to_string(r.kind);
    out["likelihood"] = r.likelihood;
    out["ranking"] = nlohmann::json::array();
    for (const auto& e : r.entries)
        out["ranking"].push_back({{"disease", e.disease}, {"value", e.value}, {"posterior", e.posterior}});
    out["tie_breaks"] = nlohmann::json::array();
    for (const auto& t : r.tie_breaks)
        out["tie_breaks"].push_back({{"higher", t.higher}, {"lower", t.lower}, {"rule", t.rule}});
    return out;
}

inline DiagnosisRanking ranking_from_json(const nlohmann::json& j) {
    DiagnosisRanking r;
    try {
        r.kind = measure_from_string(j.at("measure").get<std::string>());
        r.likelihood = j.at("likelihood").get<double>();
        for (const auto& e : j.at("ranking"))
            r.entries.push_back(
                {e.at("disease").get<std::string>(), e.at("value").get<double>(), e.at("posterior").get<double>()});
        for (const auto& t : j.at("tie_breaks"))
            r.tie_breaks.push_back(
                {t.at("higher").get<std::string>(), t.at("lower").get<std::string>(), t.at("rule").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed ranking JSON: ") + e.what());
    }
    return r;
}

}  // namespace cfdx
