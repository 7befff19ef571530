#pragma once

// Ground truth for the closed forms: the noisy-OR model as an explicit
// structural causal model, counterfactuals by abduction-action-prediction,
// and the twin-network construction that answers the same queries with
// ordinary inference on a merged factual/counterfactual graph.
//
// Everything here enumerates. It is meant to be obviously correct, not fast.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "cfdx/errors.hpp"
#include "cfdx/exact.hpp"
#include "cfdx/measures.hpp"
#include "cfdx/model.hpp"
#include "cfdx/sampling.hpp"

namespace cfdx {

struct OracleOptions {
    std::size_t latent_cap = 24;          // latent bits enumerated jointly
    std::size_t observed_cap = 24;        // observed nodes enumerated jointly by enumerate_joint
    std::size_t counterfactual_cap = 20;  // evidenced symptoms in a counterfactual distribution
};

// ---------------------------------------------------------------------------
// Latent variables

enum class LatentKind : std::uint8_t { risk_root, leak, edge };

// One exogenous bit. For risk roots the bit is the risk value itself
// (P(u = 1) = prior); for leaks and edges u = 1 means the activation fails
// (P(u = 1) = lambda).
struct Latent {
    LatentKind kind;
    Layer child_layer;
    std::size_t child;
    std::size_t parent;  // meaningful for edges only
    std::string child_id;
    std::string parent_id;  // empty for roots and leaks
    double p_one;
};

// Values of all latents, in LatentSpace order.
struct LatentAssignment {
    std::vector<std::uint8_t> bits;
};

// All exogenous variables of a model in canonical order, sorted by
// (child id, parent id) with roots and leaks first for their child.
class LatentSpace {
public:
    explicit LatentSpace(const Model& model) : model_(&model) {
        for (std::size_t r = 0; r < model.num_risks(); ++r)
            latents_.push_back({LatentKind::risk_root, Layer::risk, r, 0, model.risk_id(r), "", model.risk_prior(r)});
        for (std::size_t d = 0; d < model.num_diseases(); ++d) {
            latents_.push_back({LatentKind::leak, Layer::disease, d, 0, model.disease_id(d), "", model.disease_leak(d)});
            for (const auto& e : model.disease_parents(d))
                latents_.push_back(
                    {LatentKind::edge, Layer::disease, d, e.node, model.disease_id(d), model.risk_id(e.node), e.lambda});
        }
        for (std::size_t s = 0; s < model.num_symptoms(); ++s) {
            latents_.push_back({LatentKind::leak, Layer::symptom, s, 0, model.symptom_id(s), "", model.symptom_leak(s)});
            for (const auto& e : model.symptom_parents(s))
                latents_.push_back({LatentKind::edge, Layer::symptom, s, e.node, model.symptom_id(s),
                                    model.disease_id(e.node), e.lambda});
        }
        std::sort(latents_.begin(), latents_.end(), [](const Latent& a, const Latent& b) {
            return std::tie(a.child_id, a.parent_id) < std::tie(b.child_id, b.parent_id);
        });
        root_of_.assign(model.num_risks(), 0);
        disease_leak_.assign(model.num_diseases(), 0);
        symptom_leak_.assign(model.num_symptoms(), 0);
        disease_edges_.resize(model.num_diseases());
        symptom_edges_.resize(model.num_symptoms());
        for (std::size_t i = 0; i < latents_.size(); ++i) {
            const auto& l = latents_[i];
            if (l.kind == LatentKind::risk_root) {
                root_of_[l.child] = i;
            } else if (l.kind == LatentKind::leak) {
                (l.child_layer == Layer::disease ? disease_leak_ : symptom_leak_)[l.child] = i;
            } else {
                (l.child_layer == Layer::disease ? disease_edges_ : symptom_edges_)[l.child].push_back({l.parent, i});
            }
        }
    }

    std::size_t size() const { return latents_.size(); }
    const Latent& operator[](std::size_t i) const { return latents_[i]; }

    double probability(const LatentAssignment& u) const {
        double p = 1.0;
        for (std::size_t i = 0; i < latents_.size(); ++i) p *= u.bits[i] ? latents_[i].p_one : 1.0 - latents_[i].p_one;
        return p;
    }

    // Structural equations: every observed value is a function of the latents.
    FullAssignment evaluate(const LatentAssignment& u) const {
        FullAssignment v;
        v.risks.resize(model_->num_risks());
        v.diseases.resize(model_->num_diseases());
        v.symptoms.resize(model_->num_symptoms());
        for (std::size_t r = 0; r < v.risks.size(); ++r) v.risks[r] = u.bits[root_of_[r]];
        for (std::size_t d = 0; d < v.diseases.size(); ++d) {
            bool on = !u.bits[disease_leak_[d]];
            for (const auto& [parent, idx] : disease_edges_[d]) on = on || (v.risks[parent] && !u.bits[idx]);
            v.diseases[d] = on;
        }
        for (std::size_t s = 0; s < v.symptoms.size(); ++s) {
            bool on = !u.bits[symptom_leak_[s]];
            for (const auto& [parent, idx] : symptom_edges_[s]) on = on || (v.diseases[parent] && !u.bits[idx]);
            v.symptoms[s] = on;
        }
        return v;
    }

private:
    const Model* model_;
    std::vector<Latent> latents_;
    std::vector<std::size_t> root_of_, disease_leak_, symptom_leak_;
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> disease_edges_, symptom_edges_;
};

// Calls visit(assignment, probability) for every latent state.
template <typename Visit>
void enumerate_latents(const Model& model, Visit&& visit, std::size_t latent_cap = 24) {
    const LatentSpace space(model);
    if (space.size() > latent_cap)
        throw CapExceeded(std::to_string(space.size()) + " latent variables exceed the cap of " +
                          std::to_string(latent_cap));
    LatentAssignment u{std::vector<std::uint8_t>(space.size(), 0)};
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << space.size()); ++mask) {
        for (std::size_t i = 0; i < space.size(); ++i) u.bits[i] = (mask >> i) & 1U;
        visit(u, space.probability(u));
    }
}

// ---------------------------------------------------------------------------
// enumerate_joint

struct JointEntry {
    FullAssignment values;
    double probability;
};

namespace detail {

// Sum of P(u) over the node-local latents (leak + one bit per parent edge)
// for which the structural equation yields 0, given the parents' values.
inline double local_off_probability(double leak, const std::vector<IndexedEdge>& parents,
                                    const std::function<bool(std::size_t)>& parent_on) {
    const std::size_t m = parents.size() + 1;
    double off = 0.0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
        const bool leak_fails = mask & 1U;
        bool on = !leak_fails;
        double p = leak_fails ? leak : 1.0 - leak;
        for (std::size_t i = 0; i < parents.size(); ++i) {
            const bool fails = (mask >> (i + 1)) & 1U;
            p *= fails ? parents[i].lambda : 1.0 - parents[i].lambda;
            on = on || (parent_on(parents[i].node) && !fails);
        }
        if (!on) off += p;
    }
    return off;
}

}  // namespace detail

// Exact joint over all observed variables. Each node's conditional is the sum
// of its own latent probabilities over the latent states that reproduce the
// node's value, and the joint is their product. Enumerates 2^(#nodes) states.
inline std::vector<JointEntry> enumerate_joint(const Model& model, const OracleOptions& opts = {}) {
    const std::size_t nr = model.num_risks(), nd = model.num_diseases(), ns = model.num_symptoms();
    const std::size_t n = nr + nd + ns;
    if (n > opts.observed_cap)
        throw CapExceeded(std::to_string(n) + " observed variables exceed the cap of " + std::to_string(opts.observed_cap));
    for (std::size_t d = 0; d < nd; ++d)
        if (model.disease_parents(d).size() + 1 > opts.latent_cap) throw CapExceeded("too many latents for one node");
    for (std::size_t s = 0; s < ns; ++s)
        if (model.symptom_parents(s).size() + 1 > opts.latent_cap) throw CapExceeded("too many latents for one node");

    // Per-node off probability for every parent configuration.
    auto tabulate = [](double leak, const std::vector<IndexedEdge>& parents) {
        std::vector<double> table(std::size_t{1} << parents.size());
        for (std::uint64_t cfg = 0; cfg < table.size(); ++cfg) {
            std::map<std::size_t, bool> on;
            for (std::size_t i = 0; i < parents.size(); ++i) on[parents[i].node] = (cfg >> i) & 1U;
            table[cfg] = detail::local_off_probability(leak, parents, [&](std::size_t p) { return on.at(p); });
        }
        return table;
    };
    std::vector<std::vector<double>> disease_table(nd), symptom_table(ns);
    for (std::size_t d = 0; d < nd; ++d) disease_table[d] = tabulate(model.disease_leak(d), model.disease_parents(d));
    for (std::size_t s = 0; s < ns; ++s) symptom_table[s] = tabulate(model.symptom_leak(s), model.symptom_parents(s));

    std::vector<JointEntry> out;
    out.reserve(std::size_t{1} << n);
    FullAssignment v;
    v.risks.resize(nr);
    v.diseases.resize(nd);
    v.symptoms.resize(ns);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        double p = 1.0;
        for (std::size_t r = 0; r < nr; ++r) {
            v.risks[r] = (mask >> r) & 1U;
            p *= v.risks[r] ? model.risk_prior(r) : 1.0 - model.risk_prior(r);
        }
        auto node_factor = [&](const std::vector<double>& table, const std::vector<IndexedEdge>& parents,
                               const std::vector<std::uint8_t>& parent_values, std::uint8_t value) {
            std::uint64_t cfg = 0;
            for (std::size_t i = 0; i < parents.size(); ++i)
                if (parent_values[parents[i].node]) cfg |= std::uint64_t{1} << i;
            return value ? 1.0 - table[cfg] : table[cfg];
        };
        for (std::size_t d = 0; d < nd; ++d) {
            v.diseases[d] = (mask >> (nr + d)) & 1U;
            p *= node_factor(disease_table[d], model.disease_parents(d), v.risks, v.diseases[d]);
        }
        for (std::size_t s = 0; s < ns; ++s) {
            v.symptoms[s] = (mask >> (nr + nd + s)) & 1U;
            p *= node_factor(symptom_table[s], model.symptom_parents(s), v.diseases, v.symptoms[s]);
        }
        out.push_back({v, p});
    }
    return out;
}

inline bool consistent(const FullAssignment& v, const ResolvedEvidence& ev) {
    for (std::size_t r = 0; r < ev.risk_state.size(); ++r)
        if (ev.risk_state[r] >= 0 && v.risks[r] != ev.risk_state[r]) return false;
    for (auto s : ev.positive)
        if (!v.symptoms[s]) return false;
    for (auto s : ev.negative)
        if (v.symptoms[s]) return false;
    return true;
}

// P(evidence) and P(D_k = 1 | evidence) for every disease, read off a joint table.
struct JointPosteriors {
    double likelihood = 0.0;
    std::vector<double> posterior;
};

inline JointPosteriors posteriors_from_joint(const Model& model, const std::vector<JointEntry>& joint,
                                             const Evidence& evidence) {
    const auto ev = model.resolve(evidence);
    JointPosteriors out;
    std::vector<CompensatedSum> num(model.num_diseases());
    CompensatedSum lik;
    for (const auto& e : joint) {
        if (!consistent(e.values, ev)) continue;
        lik.add(e.probability);
        for (std::size_t d = 0; d < model.num_diseases(); ++d)
            if (e.values.diseases[d]) num[d].add(e.probability);
    }
    out.likelihood = lik.value();
    if (out.likelihood <= 0.0) throw ZeroLikelihood("evidence has zero probability under the model");
    for (const auto& n : num) out.posterior.push_back(n.value() / out.likelihood);
    return out;
}

// ---------------------------------------------------------------------------
// Interventions and counterfactual distributions

// Counterfactual interventions: diseases forced to 0 and symptom leaks
// switched off (the leak parent set to 0, so only disease activations remain).
struct Intervention {
    std::set<std::string> diseases_off;
    std::set<std::string> symptom_leaks_off;

    bool empty() const { return diseases_off.empty() && symptom_leaks_off.empty(); }
};

struct ResolvedIntervention {
    std::vector<bool> disease_off;
    std::vector<bool> leak_off;
};

inline ResolvedIntervention resolve(const Model& model, const Intervention& iv) {
    ResolvedIntervention out{std::vector<bool>(model.num_diseases(), false),
                             std::vector<bool>(model.num_symptoms(), false)};
    for (const auto& id : iv.diseases_off) out.disease_off[model.index_of(id, Layer::disease)] = true;
    for (const auto& id : iv.symptom_leaks_off) out.leak_off[model.index_of(id, Layer::symptom)] = true;
    return out;
}

// do(D_k = 0).
inline Intervention disablement_intervention(const Model& model, std::size_t k) {
    Intervention iv;
    iv.diseases_off.insert(model.disease_id(k));
    return iv;
}

// do(every other disease = 0) plus the leaks of the given symptoms switched off.
inline Intervention sufficiency_intervention(const Model& model, std::size_t k, const std::vector<std::size_t>& leak_symptoms) {
    Intervention iv;
    for (std::size_t d = 0; d < model.num_diseases(); ++d)
        if (d != k) iv.diseases_off.insert(model.disease_id(d));
    for (auto s : leak_symptoms) iv.symptom_leaks_off.insert(model.symptom_id(s));
    return iv;
}

// P(S' | evidence, do(.)) over the counterfactual states of the evidenced
// symptoms. Bit i of a state index is the counterfactual value of symptoms[i].
struct CounterfactualDistribution {
    std::vector<std::size_t> symptoms;
    std::vector<double> probability;
    double evidence_probability = 0.0;

    double at(std::uint64_t state) const { return probability[state]; }
};

namespace detail {

using PairTable = std::array<std::array<double, 2>, 2>;  // [s][s*]

// Joint of a symptom and its counterfactual dual given the factual and
// counterfactual parent values, by enumerating the latents the two share.
inline PairTable shared_latent_pair(const Model& model, std::size_t s, const std::vector<std::uint8_t>& d,
                                    const std::vector<std::uint8_t>& d_cf, bool cf_leak_active) {
    const auto& parents = model.symptom_parents(s);
    const double leak = model.symptom_leak(s);
    PairTable table{};
    const std::size_t m = parents.size() + 1;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
        const bool leak_fails = mask & 1U;
        double p = leak_fails ? leak : 1.0 - leak;
        bool on = !leak_fails;
        bool on_cf = cf_leak_active && !leak_fails;
        for (std::size_t i = 0; i < parents.size(); ++i) {
            const bool fails = (mask >> (i + 1)) & 1U;
            p *= fails ? parents[i].lambda : 1.0 - parents[i].lambda;
            on = on || (d[parents[i].node] && !fails);
            on_cf = on_cf || (d_cf[parents[i].node] && !fails);
        }
        table[on][on_cf] += p;
    }
    return table;
}

inline std::uint64_t pack(const std::vector<std::uint8_t>& bits) {
    std::uint64_t out = 0;
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) out |= std::uint64_t{1} << i;
    return out;
}

inline void unpack(std::uint64_t mask, std::vector<std::uint8_t>& bits) {
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = (mask >> i) & 1U;
}

// Evidenced symptoms in model order with their observed values.
inline std::vector<std::pair<std::size_t, std::uint8_t>> evidenced(const ResolvedEvidence& ev) {
    std::vector<std::pair<std::size_t, std::uint8_t>> out;
    for (auto s : ev.positive) out.push_back({s, 1});
    for (auto s : ev.negative) out.push_back({s, 0});
    std::sort(out.begin(), out.end());
    return out;
}

// Adds weight * prod_i tables[i][e_i][s*_i] to every counterfactual state.
inline void accumulate_states(const std::vector<PairTable>& tables,
                              const std::vector<std::pair<std::size_t, std::uint8_t>>& obs, double weight,
                              std::vector<CompensatedSum>& dist, CompensatedSum& evidence) {
    double total = weight;
    for (std::size_t i = 0; i < obs.size(); ++i) total *= tables[i][obs[i].second][0] + tables[i][obs[i].second][1];
    evidence.add(total);
    if (total == 0.0) return;
    for (std::uint64_t state = 0; state < dist.size(); ++state) {
        double p = weight;
        for (std::size_t i = 0; i < obs.size() && p != 0.0; ++i) p *= tables[i][obs[i].second][(state >> i) & 1U];
        dist[state].add(p);
    }
}

inline CounterfactualDistribution normalise(std::vector<std::pair<std::size_t, std::uint8_t>> obs,
                                            const std::vector<CompensatedSum>& dist, const CompensatedSum& evidence) {
    CounterfactualDistribution out;
    for (const auto& [s, v] : obs) out.symptoms.push_back(s);
    out.evidence_probability = evidence.value();
    if (!(out.evidence_probability > 0.0)) throw ZeroLikelihood("evidence has zero probability under the model");
    for (const auto& d : dist) out.probability.push_back(d.value() / out.evidence_probability);
    return out;
}

}  // namespace detail

// Abduction-action-prediction on the original SCM.
//  1. abduction: weight every latent state by P(u) and by whether it
//     reproduces the evidence;
//  2. action: replace the intervened equations in a copy of the model;
//  3. prediction: push the same latents through both models.
// The latents are summed in independent groups rather than jointly: risk
// roots first, then each disease's own latents given the risks (grouped by
// the factual disease value they produce), then each evidenced symptom's
// latents given the factual and counterfactual disease states. Every group
// is enumerated exhaustively; only the order of summation differs from brute
// force.
// When `factual_posterior` is given it receives P(D_j = 1 | evidence) for
// every disease, read off the same abduction.
inline CounterfactualDistribution counterfactual_query(const Model& model, const Evidence& evidence,
                                                       const Intervention& intervention, const OracleOptions& opts = {},
                                                       std::vector<double>* factual_posterior = nullptr) {
    const auto ev = model.resolve(evidence);
    const auto iv = resolve(model, intervention);
    const auto obs = detail::evidenced(ev);
    const std::size_t nd = model.num_diseases();
    if (obs.size() > opts.counterfactual_cap)
        throw CapExceeded(std::to_string(obs.size()) + " evidenced symptoms exceed the cap of " +
                          std::to_string(opts.counterfactual_cap));
    const RiskCompletions completions(model, ev.risk_state, opts.latent_cap);
    const std::size_t free_risks = ev.unobserved_risks();
    if (free_risks + nd > opts.latent_cap)
        throw CapExceeded(std::to_string(free_risks + nd) + " unobserved risks and diseases exceed the cap of " +
                          std::to_string(opts.latent_cap));
    for (std::size_t j = 0; j < nd; ++j)
        if (model.disease_parents(j).size() + 1 > opts.latent_cap) throw CapExceeded("too many latents for one disease");
    for (const auto& [s, v] : obs)
        if (model.symptom_parents(s).size() + 1 > opts.latent_cap) throw CapExceeded("too many latents for one symptom");

    // Weight of each factual disease state. The counterfactual disease state
    // follows from it: intervened diseases are 0, the rest reuse the same
    // latents and the same risks, hence the same value.
    std::vector<CompensatedSum> weight_by_state(std::size_t{1} << nd);
    std::vector<int> risks;
    std::vector<double> p_on(nd);
    for (std::uint64_t c = 0; c < completions.count(); ++c) {
        const double w = completions.get(c, risks);
        if (w == 0.0) continue;
        for (std::size_t j = 0; j < nd; ++j)
            p_on[j] = 1.0 - detail::local_off_probability(model.disease_leak(j), model.disease_parents(j),
                                                          [&](std::size_t r) { return risks[r] == 1; });
        for (std::uint64_t dm = 0; dm < weight_by_state.size(); ++dm) {
            double p = w;
            for (std::size_t j = 0; j < nd && p != 0.0; ++j) p *= ((dm >> j) & 1U) ? p_on[j] : 1.0 - p_on[j];
            if (p != 0.0) weight_by_state[dm].add(p);
        }
    }

    std::vector<std::uint8_t> d(nd), d_cf(nd);
    std::vector<CompensatedSum> dist(std::size_t{1} << obs.size());
    std::vector<CompensatedSum> disease_mass(model.num_diseases());
    CompensatedSum evidence_mass;
    std::vector<detail::PairTable> tables(obs.size());
    for (std::uint64_t dm = 0; dm < weight_by_state.size(); ++dm) {
        const auto& weight = weight_by_state[dm];
        if (weight.value() == 0.0) continue;
        detail::unpack(dm, d);
        for (std::size_t j = 0; j < nd; ++j) d_cf[j] = iv.disease_off[j] ? 0 : d[j];
        for (std::size_t i = 0; i < obs.size(); ++i)
            tables[i] = detail::shared_latent_pair(model, obs[i].first, d, d_cf, !iv.leak_off[obs[i].first]);
        double mass = weight.value();  // P(E, upstream state)
        for (std::size_t i = 0; i < obs.size(); ++i) mass *= tables[i][obs[i].second][0] + tables[i][obs[i].second][1];
        for (std::size_t j = 0; j < d.size(); ++j)
            if (d[j]) disease_mass[j].add(mass);
        detail::accumulate_states(tables, obs, weight.value(), dist, evidence_mass);
    }
    auto out = detail::normalise(obs, dist, evidence_mass);
    if (factual_posterior) {
        factual_posterior->clear();
        for (const auto& m : disease_mass) factual_posterior->push_back(m.value() / out.evidence_probability);
    }
    return out;
}

// The same query by brute force over every latent of the model (tiny models).
inline CounterfactualDistribution counterfactual_query_brute_force(const Model& model, const Evidence& evidence,
                                                                   const Intervention& intervention,
                                                                   std::size_t latent_cap = 24) {
    const auto ev = model.resolve(evidence);
    const auto iv = resolve(model, intervention);
    const auto obs = detail::evidenced(ev);
    const LatentSpace space(model);
    std::vector<CompensatedSum> dist(std::size_t{1} << obs.size());
    CompensatedSum evidence_mass;
    enumerate_latents(
        model,
        [&](const LatentAssignment& u, double p) {
            const FullAssignment v = space.evaluate(u);
            if (!consistent(v, ev)) return;
            // Counterfactual world: same latents, intervened equations.
            FullAssignment cf = v;
            for (std::size_t j = 0; j < cf.diseases.size(); ++j)
                if (iv.disease_off[j]) cf.diseases[j] = 0;
            std::uint64_t state = 0;
            for (std::size_t i = 0; i < obs.size(); ++i) {
                const std::size_t s = obs[i].first;
                bool on = false;
                for (std::size_t l = 0; l < space.size(); ++l) {
                    const auto& lat = space[l];
                    if (lat.child_layer != Layer::symptom || lat.child != s) continue;
                    if (lat.kind == LatentKind::leak && !iv.leak_off[s] && !u.bits[l]) on = true;
                    if (lat.kind == LatentKind::edge && cf.diseases[lat.parent] && !u.bits[l]) on = true;
                }
                if (on) state |= std::uint64_t{1} << i;
            }
            evidence_mass.add(p);
            dist[state].add(p);
        },
        latent_cap);
    return detail::normalise(obs, dist, evidence_mass);
}

// ---------------------------------------------------------------------------
// Twin networks

enum class TwinNodeKind : std::uint8_t { risk, disease, intervened_disease, symptom, dual_symptom };

inline const char* to_string(TwinNodeKind kind) {
    switch (kind) {
        case TwinNodeKind::risk: return "risk";
        case TwinNodeKind::disease: return "disease";
        case TwinNodeKind::intervened_disease: return "intervened_disease";
        case TwinNodeKind::symptom: return "symptom";
        case TwinNodeKind::dual_symptom: return "dual_symptom";
    }
    return "?";
}

struct TwinNode {
    std::string id;
    TwinNodeKind kind;
    std::size_t model_index;        // index of the underlying model node
    std::vector<std::string> parents;
    bool leak_active = true;        // symptoms only
};

// Factual and counterfactual graphs merged wherever a node and its dual have
// identical parents and latents. Risks and non-intervened diseases are always
// merged; a symptom keeps a dual "<id>*" only if one of its parents (disease
// or leak) is intervened on. Intervened diseases appear as "<id>*" with no
// incoming edges.
struct TwinNetwork {
    std::vector<TwinNode> nodes;
    Intervention intervention;
    std::map<std::string, std::string> shared_latents;  // dual id -> factual id

    const TwinNode* find(const std::string& id) const {
        for (const auto& n : nodes)
            if (n.id == id) return &n;
        return nullptr;
    }

    std::vector<std::string> ids(TwinNodeKind kind) const {
        std::vector<std::string> out;
        for (const auto& n : nodes)
            if (n.kind == kind) out.push_back(n.id);
        return out;
    }
};

inline std::string dual_id(const std::string& id) { return id + "*"; }

// With `evidence`, symptoms that carry no evidence are pruned together with
// their duals.
inline TwinNetwork build_twin_network(const Model& model, const Intervention& intervention,
                                      const Evidence* evidence = nullptr) {
    const auto iv = resolve(model, intervention);
    std::vector<bool> keep(model.num_symptoms(), true);
    if (evidence) {
        const auto ev = model.resolve(*evidence);
        std::fill(keep.begin(), keep.end(), false);
        for (auto s : ev.positive) keep[s] = true;
        for (auto s : ev.negative) keep[s] = true;
    }

    TwinNetwork twin;
    twin.intervention = intervention;
    for (std::size_t r = 0; r < model.num_risks(); ++r)
        twin.nodes.push_back({model.risk_id(r), TwinNodeKind::risk, r, {}, true});
    for (std::size_t d = 0; d < model.num_diseases(); ++d) {
        std::vector<std::string> parents;
        for (const auto& e : model.disease_parents(d)) parents.push_back(model.risk_id(e.node));
        twin.nodes.push_back({model.disease_id(d), TwinNodeKind::disease, d, parents, true});
        if (iv.disease_off[d]) {
            twin.nodes.push_back({dual_id(model.disease_id(d)), TwinNodeKind::intervened_disease, d, {}, true});
            twin.shared_latents[dual_id(model.disease_id(d))] = model.disease_id(d);
        }
    }
    for (std::size_t s = 0; s < model.num_symptoms(); ++s) {
        if (!keep[s]) continue;
        std::vector<std::string> parents, dual_parents;
        bool affected = iv.leak_off[s];
        for (const auto& e : model.symptom_parents(s)) {
            parents.push_back(model.disease_id(e.node));
            if (iv.disease_off[e.node]) {
                affected = true;
                dual_parents.push_back(dual_id(model.disease_id(e.node)));
            } else {
                dual_parents.push_back(model.disease_id(e.node));
            }
        }
        twin.nodes.push_back({model.symptom_id(s), TwinNodeKind::symptom, s, parents, true});
        if (affected) {
            twin.nodes.push_back({dual_id(model.symptom_id(s)), TwinNodeKind::dual_symptom, s, dual_parents, !iv.leak_off[s]});
            twin.shared_latents[dual_id(model.symptom_id(s))] = model.symptom_id(s);
        }
    }
    return twin;
}

// Ordinary inference on the twin network: enumerate risks and factual
// diseases with their noisy-OR conditionals, read counterfactual diseases off
// the merge/intervention structure, and give every dual symptom pair the
// joint induced by its shared latents. Merged symptoms are their own duals.
inline CounterfactualDistribution counterfactual_query_twin(const Model& model, const TwinNetwork& twin,
                                                            const Evidence& evidence, const OracleOptions& opts = {}) {
    const auto ev = model.resolve(evidence);
    const auto obs = detail::evidenced(ev);
    if (obs.size() > opts.counterfactual_cap)
        throw CapExceeded(std::to_string(obs.size()) + " evidenced symptoms exceed the cap of " +
                          std::to_string(opts.counterfactual_cap));
    const std::size_t nd = model.num_diseases();
    const RiskCompletions completions(model, ev.risk_state, opts.latent_cap);
    if (completions.count() * (std::uint64_t{1} << std::min<std::size_t>(nd, 62)) > (std::uint64_t{1} << opts.latent_cap) ||
        nd > opts.latent_cap)
        throw CapExceeded("twin network has too many risk/disease states to enumerate");

    // Twin structure per evidenced symptom.
    std::vector<const TwinNode*> factual(obs.size()), dual(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const auto& id = model.symptom_id(obs[i].first);
        factual[i] = twin.find(id);
        if (!factual[i]) throw InvalidArgument("twin network was pruned of evidenced symptom '" + id + "'");
        dual[i] = twin.find(dual_id(id));
    }
    std::vector<bool> intervened(nd, false);
    for (std::size_t d = 0; d < nd; ++d) intervened[d] = twin.find(dual_id(model.disease_id(d))) != nullptr;

    std::vector<CompensatedSum> dist(std::size_t{1} << obs.size());
    CompensatedSum evidence_mass;
    std::vector<int> risks;
    std::vector<std::uint8_t> d(nd), d_cf(nd);
    std::vector<detail::PairTable> tables(obs.size());
    for (std::uint64_t c = 0; c < completions.count(); ++c) {
        const double w = completions.get(c, risks);
        if (w == 0.0) continue;
        std::vector<double> p_on(nd);
        for (std::size_t j = 0; j < nd; ++j) p_on[j] = model.disease_activation(j, risks);
        for (std::uint64_t dm = 0; dm < (std::uint64_t{1} << nd); ++dm) {
            double p = w;
            for (std::size_t j = 0; j < nd; ++j) {
                d[j] = (dm >> j) & 1U;
                p *= d[j] ? p_on[j] : 1.0 - p_on[j];
                d_cf[j] = intervened[j] ? 0 : d[j];
            }
            if (p == 0.0) continue;
            for (std::size_t i = 0; i < obs.size(); ++i) {
                const std::size_t s = obs[i].first;
                if (dual[i]) {
                    tables[i] = detail::shared_latent_pair(model, s, d, d_cf, dual[i]->leak_active);
                } else {
                    double off = model.symptom_leak(s);
                    for (const auto& e : model.symptom_parents(s))
                        if (d[e.node]) off *= e.lambda;
                    tables[i] = {{{off, 0.0}, {0.0, 1.0 - off}}};
                }
            }
            detail::accumulate_states(tables, obs, p, dist, evidence_mass);
        }
    }
    return detail::normalise(obs, dist, evidence_mass);
}

// Graphviz rendering; dashed edges join nodes that share latents.
inline std::string to_dot(const TwinNetwork& twin) {
    std::ostringstream out;
    out << "digraph twin {\n  rankdir=TB;\n";
    for (const auto& n : twin.nodes) {
        const char* shape = n.kind == TwinNodeKind::risk ? "box" : "ellipse";
        const char* color = n.kind == TwinNodeKind::intervened_disease ? "red"
                            : (n.kind == TwinNodeKind::dual_symptom ? "blue" : "black");
        out << "  \"" << n.id << "\" [shape=" << shape << ", color=" << color;
        if (!n.leak_active) out << ", label=\"" << n.id << "\\n(leak off)\"";
        out << "];\n";
    }
    for (const auto& n : twin.nodes)
        for (const auto& p : n.parents) out << "  \"" << p << "\" -> \"" << n.id << "\";\n";
    for (const auto& [dual, factual] : twin.shared_latents)
        out << "  \"" << factual << "\" -> \"" << dual << "\" [style=dashed, dir=none];\n";
    out << "}\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Dual symptom conditionals in closed form

enum class DualIntervention : std::uint8_t {
    disablement,  // do(D_k* = 0)
    sufficiency,  // do(D_i* = 0 for i != k), counterfactual leak off
};

struct DualSymptomCpt {
    detail::PairTable p{};  // p[s][s*]

    double at(int s, int s_cf) const { return p[s][s_cf]; }
};

// The four entries of P(s, s* | disease parents, intervention on D_k).
// parent_states must assign every disease parent of the symptom.
inline DualSymptomCpt dual_symptom_cpt(const Model& model, const std::string& symptom,
                                       const std::map<std::string, int>& parent_states, DualIntervention kind,
                                       const std::string& disease) {
    const std::size_t s = model.index_of(symptom, Layer::symptom);
    const std::size_t k = model.index_of(disease, Layer::disease);
    int d_k = 0;
    double others_off = model.symptom_leak(s);  // lambda_L * prod_{i != k} lambda_i^{d_i}
    for (const auto& e : model.symptom_parents(s)) {
        auto it = parent_states.find(model.disease_id(e.node));
        if (it == parent_states.end())
            throw InvalidArgument("missing assignment for parent '" + model.disease_id(e.node) + "' of '" + symptom + "'");
        if (e.node == k) {
            d_k = it->second;
        } else if (it->second == 1) {
            others_off *= e.lambda;
        }
    }
    const double lam_k = model.lambda(k, s);
    const double off = d_k ? others_off * lam_k : others_off;  // P(s = 0 | d)

    DualSymptomCpt cpt;
    cpt.p[0][0] = off;
    cpt.p[0][1] = 0.0;
    if (kind == DualIntervention::disablement) {
        cpt.p[1][0] = d_k ? (1.0 / lam_k - 1.0) * others_off * lam_k : 0.0;
        cpt.p[1][1] = 1.0 - others_off;
    } else {
        cpt.p[1][0] = (d_k ? lam_k : 1.0) * (1.0 - others_off);
        cpt.p[1][1] = d_k ? 1.0 - lam_k : 0.0;
    }
    return cpt;
}

// ---------------------------------------------------------------------------
// Definition-level measures

// Which symptom leaks the sufficiency intervention switches off.
enum class LeakScope : std::uint8_t { positive_symptoms, all_symptoms };

inline double measure_oracle(const Model& model, const Evidence& evidence, const std::string& disease,
                             MeasureKind kind, const OracleOptions& opts = {},
                             LeakScope scope = LeakScope::positive_symptoms) {
    const std::size_t k = model.index_of(disease, Layer::disease);
    const auto ev = model.resolve(evidence);
    const auto obs = detail::evidenced(ev);

    if (kind == MeasureKind::posterior) {
        std::vector<double> posterior;
        counterfactual_query(model, evidence, Intervention{}, opts, &posterior);
        return posterior[k];
    }

    Intervention iv;
    if (kind == MeasureKind::disablement) {
        iv = disablement_intervention(model, k);
    } else if (kind == MeasureKind::sufficiency) {
        std::vector<std::size_t> leaks;
        if (scope == LeakScope::all_symptoms) {
            for (std::size_t s = 0; s < model.num_symptoms(); ++s) leaks.push_back(s);
        } else {
            leaks = ev.positive;
        }
        iv = sufficiency_intervention(model, k, leaks);
    }
    const auto dist = counterfactual_query(model, evidence, iv, opts);

    CompensatedSum expectation;
    for (std::uint64_t state = 0; state < dist.probability.size(); ++state) {
        int count = 0;
        for (std::size_t i = 0; i < obs.size(); ++i) {
            if (obs[i].second != 1) continue;
            const bool on_cf = (state >> i) & 1U;
            if (kind == MeasureKind::disablement && !on_cf) ++count;   // |S+ \ S+'|
            if (kind == MeasureKind::sufficiency && on_cf) ++count;    // |S+'|
        }
        expectation.add(count * dist.probability[state]);
    }
    return expectation.value();
}

}  // namespace cfdx
