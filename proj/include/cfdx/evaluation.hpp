#pragma once

// Vignette generation and the top-k benchmark: for every vignette, rank all
// diseases under each measure and record where the true disease lands.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cfdx/errors.hpp"
#include "cfdx/exact.hpp"
#include "cfdx/measures.hpp"
#include "cfdx/model.hpp"
#include "cfdx/parallel.hpp"
#include "cfdx/rng.hpp"
#include "cfdx/sampling.hpp"

namespace cfdx {

// ---------------------------------------------------------------------------
// Rarity

// Lower bounds of the first four buckets; anything below the last is
// "very rare". A value exactly on a bound goes to the more common bucket.
struct RarityThresholds {
    double very_common = 1e-2;
    double common = 1e-3;
    double uncommon = 1e-4;
    double rare = 1e-5;
};

inline constexpr const char* rarity_labels[] = {"very common", "common", "uncommon", "rare", "very rare"};

inline std::string rarity_from_probability(double p, const RarityThresholds& t = {}) {
    if (p >= t.very_common) return rarity_labels[0];
    if (p >= t.common) return rarity_labels[1];
    if (p >= t.uncommon) return rarity_labels[2];
    if (p >= t.rare) return rarity_labels[3];
    return rarity_labels[4];
}

// Bucket of P(D = 1 | observed risks).
inline std::string rarity_bucket(const Model& model, const std::string& disease, const std::map<std::string, int>& risks,
                                 const RarityThresholds& t = {}) {
    Evidence ev;
    ev.risks = risks;
    const auto resolved = model.resolve(ev);
    return rarity_from_probability(model.disease_marginal(model.index_of(disease, Layer::disease), resolved.risk_state), t);
}

// ---------------------------------------------------------------------------
// Vignettes

enum class DiseaseChoice : std::uint8_t { uniform, prior_weighted };

struct MaskingPolicy {
    DiseaseChoice choice = DiseaseChoice::uniform;
    double risk_observed = 0.5;       // chance each risk factor is reported
    double expected_negatives = 2.0;  // mean number of off symptoms reported as S-
    bool reveal_all = false;          // report every risk and every symptom
    std::size_t max_positive = 20;    // resample vignettes with larger S+
    std::size_t max_attempts = 1000;  // resamples per vignette
};

inline nlohmann::json to_json(const MaskingPolicy& p) {
    return {{"choice", p.choice == DiseaseChoice::uniform ? "uniform" : "prior_weighted"},
            {"risk_observed", p.risk_observed},
            {"expected_negatives", p.expected_negatives},
            {"reveal_all", p.reveal_all},
            {"max_positive", p.max_positive},
            {"max_attempts", p.max_attempts}};
}

struct Vignette {
    std::string true_disease;
    Evidence evidence;
    std::string rarity;
    std::uint64_t seed = 0;
    std::optional<std::size_t> k;  // per-case differential size, if any

    friend bool operator==(const Vignette&, const Vignette&) = default;
};

inline nlohmann::json to_json(const Vignette& v) {
    nlohmann::json j = {{"true_disease", v.true_disease},
                        {"evidence", to_json(v.evidence)},
                        {"rarity", v.rarity},
                        {"seed", v.seed}};
    if (v.k) j["k"] = *v.k;
    return j;
}

inline Vignette vignette_from_json(const nlohmann::json& j) {
    Vignette v;
    try {
        v.true_disease = j.at("true_disease").get<std::string>();
        v.evidence = evidence_from_json(j.at("evidence"));
        v.rarity = j.value("rarity", std::string{});
        v.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("k")) v.k = j.at("k").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed vignette: ") + e.what());
    }
    return v;
}

inline void write_jsonl(std::ostream& out, const std::vector<Vignette>& vignettes) {
    for (const auto& v : vignettes) out << to_json(v).dump() << '\n';
}

inline std::vector<Vignette> read_jsonl(std::istream& in) {
    std::vector<Vignette> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(vignette_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::parse_error& e) {
            throw InvalidArgument("vignette line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

// Vignette i uses its own stream derive_seed(seed, i): pick the true disease,
// sample a full state with it forced on, report all on symptoms as S+ and a
// random subset of the off symptoms and of the risks.
inline std::vector<Vignette> generate_vignettes(const Model& model, std::size_t n, std::uint64_t seed,
                                                const MaskingPolicy& policy = {}, const RarityThresholds& rarity = {}) {
    if (n == 0) throw InvalidArgument("number of vignettes must be at least 1");
    const std::size_t nd = model.num_diseases();
    std::vector<double> cumulative(nd);
    const std::vector<int> no_risks(model.num_risks(), -1);
    double total = 0.0;
    for (std::size_t d = 0; d < nd; ++d) {
        total += policy.choice == DiseaseChoice::uniform ? 1.0 : model.disease_marginal(d, no_risks);
        cumulative[d] = total;
    }
    if (!(total > 0.0)) throw InvalidArgument("every disease has zero prior probability");

    std::vector<Vignette> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t vseed = derive_seed(seed, i);
        Rng rng(vseed);
        const double u = rng.uniform() * total;
        const std::size_t d = std::min<std::size_t>(
            nd - 1, static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin()));
        Vignette v;
        v.true_disease = model.disease_id(d);
        v.seed = vseed;
        bool done = false;
        for (std::size_t attempt = 0; attempt < policy.max_attempts && !done; ++attempt) {
            const FullAssignment a = ancestral_sample(model, rng, d);
            Evidence ev;
            std::vector<std::size_t> off;
            for (std::size_t s = 0; s < model.num_symptoms(); ++s) {
                if (a.symptoms[s]) {
                    ev.positive.insert(model.symptom_id(s));
                } else {
                    off.push_back(s);
                }
            }
            if (ev.positive.empty() || ev.positive.size() > policy.max_positive) continue;
            const double p_neg = off.empty() ? 0.0 : std::min(1.0, policy.expected_negatives / static_cast<double>(off.size()));
            for (auto s : off)
                if (policy.reveal_all || rng.uniform() < p_neg) ev.negative.insert(model.symptom_id(s));
            for (std::size_t r = 0; r < model.num_risks(); ++r)
                if (policy.reveal_all || rng.uniform() < policy.risk_observed) ev.risks[model.risk_id(r)] = a.risks[r];
            v.evidence = std::move(ev);
            done = true;
        }
        if (!done)
            throw SamplingError("disease '" + v.true_disease + "' produced no admissible symptom set in " +
                                std::to_string(policy.max_attempts) + " attempts");
        v.rarity = rarity_bucket(model, v.true_disease, v.evidence.risks, rarity);
        out.push_back(std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Benchmark report

struct TopkCurve {
    MeasureKind measure = MeasureKind::posterior;
    std::vector<double> accuracy;   // index k-1
    std::vector<double> std_error;  // binomial standard error
    std::vector<double> ci_low;     // 95% Wilson interval
    std::vector<double> ci_high;
    double mean_rank = 0.0;
    double std_rank = 0.0;
    std::optional<double> override_accuracy;  // accuracy at each vignette's own k

    friend bool operator==(const TopkCurve&, const TopkCurve&) = default;
};

struct PairwiseRecord {
    MeasureKind first = MeasureKind::posterior;
    MeasureKind second = MeasureKind::posterior;
    std::size_t wins = 0;    // first places the true disease strictly higher
    std::size_t draws = 0;
    std::size_t losses = 0;

    friend bool operator==(const PairwiseRecord&, const PairwiseRecord&) = default;
};

struct RarityStratum {
    std::string bucket;
    std::size_t count = 0;
    std::vector<double> mean_rank;      // per measure, same order as the report
    std::vector<double> top1_accuracy;

    friend bool operator==(const RarityStratum&, const RarityStratum&) = default;
};

struct ExcludedVignette {
    std::size_t index = 0;
    std::string reason;

    friend bool operator==(const ExcludedVignette&, const ExcludedVignette&) = default;
};

struct BenchmarkReport {
    std::size_t vignettes = 0;
    std::size_t evaluated = 0;
    std::size_t k_max = 0;
    std::vector<MeasureKind> measures;
    std::vector<TopkCurve> curves;
    std::vector<PairwiseRecord> pairwise;
    std::vector<RarityStratum> strata;
    std::vector<ExcludedVignette> excluded;
    // ranks[v][m]: 1-based position of the true disease; empty if excluded.
    std::vector<std::vector<std::size_t>> ranks;
    nlohmann::json run_info = nlohmann::json::object();

    friend bool operator==(const BenchmarkReport&, const BenchmarkReport&) = default;
};

// Normal-approximation standard error and the 95% Wilson interval.
inline void binomial_interval(std::size_t hits, std::size_t n, double& se, double& lo, double& hi) {
    if (n == 0) {
        se = lo = hi = 0.0;
        return;
    }
    const double z = 1.959963984540054;
    const double p = static_cast<double>(hits) / static_cast<double>(n);
    const double nn = static_cast<double>(n);
    se = std::sqrt(p * (1.0 - p) / nn);
    const double denom = 1.0 + z * z / nn;
    const double centre = (p + z * z / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / denom;
    // Clamped so the interval always contains p despite rounding at 0 and 1.
    lo = std::clamp(centre - half, 0.0, p);
    hi = std::clamp(centre + half, p, 1.0);
}

struct EvaluationOptions {
    InferenceOptions inference;
    unsigned threads = 1;  // vignettes in flight; inference itself stays single-threaded
};

// Assembles the report from per-vignette ranks. Exposed separately so the
// aggregation can be checked on hand-built rankings.
inline BenchmarkReport summarize_ranks(const std::vector<MeasureKind>& measures, std::size_t k_max,
                                       const std::vector<std::vector<std::size_t>>& ranks,
                                       const std::vector<std::string>& rarity,
                                       const std::vector<std::optional<std::size_t>>& k_override,
                                       std::vector<ExcludedVignette> excluded) {
    BenchmarkReport rep;
    rep.vignettes = ranks.size();
    rep.k_max = k_max;
    rep.measures = measures;
    rep.ranks = ranks;
    rep.excluded = std::move(excluded);
    std::vector<std::size_t> ok;
    for (std::size_t v = 0; v < ranks.size(); ++v)
        if (!ranks[v].empty()) ok.push_back(v);
    rep.evaluated = ok.size();

    const bool any_override = std::any_of(k_override.begin(), k_override.end(), [](const auto& k) { return k.has_value(); });
    for (std::size_t m = 0; m < measures.size(); ++m) {
        TopkCurve c;
        c.measure = measures[m];
        for (std::size_t k = 1; k <= k_max; ++k) {
            std::size_t hits = 0;
            for (auto v : ok)
                if (ranks[v][m] <= k) ++hits;
            double se, lo, hi;
            binomial_interval(hits, ok.size(), se, lo, hi);
            c.accuracy.push_back(ok.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(ok.size()));
            c.std_error.push_back(se);
            c.ci_low.push_back(lo);
            c.ci_high.push_back(hi);
        }
        double sum = 0.0, sq = 0.0;
        for (auto v : ok) {
            sum += static_cast<double>(ranks[v][m]);
            sq += static_cast<double>(ranks[v][m]) * static_cast<double>(ranks[v][m]);
        }
        if (!ok.empty()) {
            const double n = static_cast<double>(ok.size());
            c.mean_rank = sum / n;
            c.std_rank = ok.size() > 1 ? std::sqrt(std::max(0.0, (sq - n * c.mean_rank * c.mean_rank) / (n - 1.0))) : 0.0;
        }
        if (any_override) {
            std::size_t hits = 0;
            for (auto v : ok)
                if (ranks[v][m] <= k_override[v].value_or(k_max)) ++hits;
            c.override_accuracy = ok.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(ok.size());
        }
        rep.curves.push_back(std::move(c));
    }

    for (std::size_t a = 0; a < measures.size(); ++a) {
        for (std::size_t b = a + 1; b < measures.size(); ++b) {
            PairwiseRecord p{measures[a], measures[b]};
            for (auto v : ok) {
                if (ranks[v][a] < ranks[v][b]) {
                    ++p.wins;
                } else if (ranks[v][a] == ranks[v][b]) {
                    ++p.draws;
                } else {
                    ++p.losses;
                }
            }
            rep.pairwise.push_back(p);
        }
    }

    for (const char* label : rarity_labels) {
        RarityStratum s;
        s.bucket = label;
        std::vector<double> sum(measures.size(), 0.0), top1(measures.size(), 0.0);
        for (auto v : ok) {
            if (rarity[v] != label) continue;
            ++s.count;
            for (std::size_t m = 0; m < measures.size(); ++m) {
                sum[m] += static_cast<double>(ranks[v][m]);
                if (ranks[v][m] == 1) top1[m] += 1.0;
            }
        }
        for (std::size_t m = 0; m < measures.size(); ++m) {
            s.mean_rank.push_back(s.count ? sum[m] / static_cast<double>(s.count) : 0.0);
            s.top1_accuracy.push_back(s.count ? top1[m] / static_cast<double>(s.count) : 0.0);
        }
        rep.strata.push_back(std::move(s));
    }
    return rep;
}

inline BenchmarkReport evaluate_topk(const Model& model, const std::vector<Vignette>& vignettes,
                                     const std::vector<MeasureKind>& measures, std::size_t k_max,
                                     const EvaluationOptions& opts = {}) {
    if (k_max == 0) throw InvalidArgument("K must be at least 1");
    if (measures.empty()) throw InvalidArgument("at least one measure is required");
    const std::size_t n = vignettes.size();
    std::vector<std::vector<std::size_t>> ranks(n);
    std::vector<std::string> reasons(n);
    InferenceOptions inference = opts.inference;
    inference.threads = 1;

    parallel_for(n, opts.threads, [&](std::size_t v) {
        const auto& vig = vignettes[v];
        try {
            const auto ev = model.resolve(vig.evidence);
            const auto scores = score_evidence(model, ev, std::nullopt, inference);
            if (scores.zero_likelihood) {
                reasons[v] = "zero likelihood";
                return;
            }
            for (auto m : measures) {
                const auto ranking = rank_from_scores(model, scores, m);
                const std::size_t pos = ranking.position_of(vig.true_disease);
                if (pos == 0) throw InvalidArgument("true disease '" + vig.true_disease + "' is not in the model");
                ranks[v].push_back(pos);
            }
        } catch (const Error& e) {
            ranks[v].clear();
            reasons[v] = e.what();
        }
    });

    std::vector<ExcludedVignette> excluded;
    std::vector<std::string> rarity(n);
    std::vector<std::optional<std::size_t>> k_override(n);
    for (std::size_t v = 0; v < n; ++v) {
        if (ranks[v].empty()) excluded.push_back({v, reasons[v].empty() ? "not evaluated" : reasons[v]});
        rarity[v] = vignettes[v].rarity;
        k_override[v] = vignettes[v].k;
    }
    return summarize_ranks(measures, k_max, ranks, rarity, k_override, std::move(excluded));
}

// ---------------------------------------------------------------------------
// Serialisation

inline nlohmann::json to_json(const BenchmarkReport& r) {
    nlohmann::json j;
    j["vignettes"] = r.vignettes;
    j["evaluated"] = r.evaluated;
    j["k_max"] = r.k_max;
    j["measures"] = nlohmann::json::array();
    for (auto m : r.measures) j["measures"].push_back(to_string(m));
    j["topk"] = nlohmann::json::array();
    for (const auto& c : r.curves) {
        nlohmann::json cj = {{"measure", to_string(c.measure)},
                             {"accuracy", c.accuracy},
                             {"std_error", c.std_error},
                             {"ci_low", c.ci_low},
                             {"ci_high", c.ci_high},
                             {"mean_rank", c.mean_rank},
                             {"std_rank", c.std_rank}};
        if (c.override_accuracy) cj["override_accuracy"] = *c.override_accuracy;
        j["topk"].push_back(cj);
    }
    j["pairwise"] = nlohmann::json::array();
    for (const auto& p : r.pairwise)
        j["pairwise"].push_back({{"first", to_string(p.first)},
                                 {"second", to_string(p.second)},
                                 {"wins", p.wins},
                                 {"draws", p.draws},
                                 {"losses", p.losses}});
    j["rarity"] = nlohmann::json::array();
    for (const auto& s : r.strata)
        j["rarity"].push_back(
            {{"bucket", s.bucket}, {"count", s.count}, {"mean_rank", s.mean_rank}, {"top1_accuracy", s.top1_accuracy}});
    j["excluded"] = nlohmann::json::array();
    for (const auto& e : r.excluded) j["excluded"].push_back({{"index", e.index}, {"reason", e.reason}});
    j["ranks"] = r.ranks;
    j["run"] = r.run_info;
    return j;
}

inline BenchmarkReport report_from_json(const nlohmann::json& j) {
    BenchmarkReport r;
    try {
        r.vignettes = j.at("vignettes").get<std::size_t>();
        r.evaluated = j.at("evaluated").get<std::size_t>();
        r.k_max = j.at("k_max").get<std::size_t>();
        for (const auto& m : j.at("measures")) r.measures.push_back(measure_from_string(m.get<std::string>()));
        for (const auto& cj : j.at("topk")) {
            TopkCurve c;
            c.measure = measure_from_string(cj.at("measure").get<std::string>());
            c.accuracy = cj.at("accuracy").get<std::vector<double>>();
            c.std_error = cj.at("std_error").get<std::vector<double>>();
            c.ci_low = cj.at("ci_low").get<std::vector<double>>();
            c.ci_high = cj.at("ci_high").get<std::vector<double>>();
            c.mean_rank = cj.at("mean_rank").get<double>();
            c.std_rank = cj.at("std_rank").get<double>();
            if (cj.contains("override_accuracy")) c.override_accuracy = cj.at("override_accuracy").get<double>();
            r.curves.push_back(std::move(c));
        }
        for (const auto& p : j.at("pairwise"))
            r.pairwise.push_back({measure_from_string(p.at("first").get<std::string>()),
                                  measure_from_string(p.at("second").get<std::string>()), p.at("wins").get<std::size_t>(),
                                  p.at("draws").get<std::size_t>(), p.at("losses").get<std::size_t>()});
        for (const auto& s : j.at("rarity"))
            r.strata.push_back({s.at("bucket").get<std::string>(), s.at("count").get<std::size_t>(),
                                s.at("mean_rank").get<std::vector<double>>(),
                                s.at("top1_accuracy").get<std::vector<double>>()});
        for (const auto& e : j.at("excluded"))
            r.excluded.push_back({e.at("index").get<std::size_t>(), e.at("reason").get<std::string>()});
        r.ranks = j.at("ranks").get<std::vector<std::vector<std::size_t>>>();
        r.run_info = j.value("run", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed benchmark report: ") + e.what());
    }
    return r;
}

// Top-k table: one row per (measure, k).
inline std::string accuracy_csv(const BenchmarkReport& r) {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "measure,k,accuracy,std_error,ci_low,ci_high\n";
    for (const auto& c : r.curves)
        for (std::size_t k = 0; k < c.accuracy.size(); ++k)
            out << to_string(c.measure) << ',' << k + 1 << ',' << c.accuracy[k] << ',' << c.std_error[k] << ','
                << c.ci_low[k] << ',' << c.ci_high[k] << '\n';
    return out.str();
}

// Parses accuracy_csv output back into curves (rank statistics are not part
// of that table and come back as zero).
inline std::vector<TopkCurve> curves_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    if (line != "measure,k,accuracy,std_error,ci_low,ci_high") throw InvalidArgument("unexpected accuracy CSV header");
    std::vector<TopkCurve> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (f.size() != 6) throw InvalidArgument("accuracy CSV row has " + std::to_string(f.size()) + " fields");
        const auto m = measure_from_string(f[0]);
        if (out.empty() || out.back().measure != m) out.push_back(TopkCurve{m});
        auto& c = out.back();
        if (std::stoul(f[1]) != c.accuracy.size() + 1) throw InvalidArgument("accuracy CSV rows out of order");
        c.accuracy.push_back(std::stod(f[2]));
        c.std_error.push_back(std::stod(f[3]));
        c.ci_low.push_back(std::stod(f[4]));
        c.ci_high.push_back(std::stod(f[5]));
    }
    return out;
}

// Full report as CSV sections separated by blank lines.
inline std::string report_csv(const BenchmarkReport& r) {
    std::ostringstream out;
    out << std::setprecision(17);
    out << accuracy_csv(r) << '\n';
    out << "measure,mean_rank,std_rank\n";
    for (const auto& c : r.curves) out << to_string(c.measure) << ',' << c.mean_rank << ',' << c.std_rank << '\n';
    out << "\nfirst,second,wins,draws,losses\n";
    for (const auto& p : r.pairwise)
        out << to_string(p.first) << ',' << to_string(p.second) << ',' << p.wins << ',' << p.draws << ',' << p.losses
            << '\n';
    out << "\nbucket,count";
    for (auto m : r.measures) out << ",mean_rank_" << to_string(m);
    for (auto m : r.measures) out << ",top1_" << to_string(m);
    out << '\n';
    for (const auto& s : r.strata) {
        out << '"' << s.bucket << "\"," << s.count;
        for (double x : s.mean_rank) out << ',' << x;
        for (double x : s.top1_accuracy) out << ',' << x;
        out << '\n';
    }
    out << "\nexcluded_index,reason\n";
    for (const auto& e : r.excluded) {
        std::string reason = e.reason;
        std::replace(reason.begin(), reason.end(), '"', '\'');
        out << e.index << ",\"" << reason << "\"\n";
    }
    return out.str();
}

}  // namespace cfdx
