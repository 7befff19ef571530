#pragma once

// Three-layer noisy-OR networks: risk factors -> diseases -> symptoms.
//
// Every non-root node Y is the Boolean OR of its parent activations
//   y = OR_i (x_i AND NOT u_i) OR (NOT u_L)
// where P(u_i = 1) = lambda_i is the failure probability of edge i and u_L is
// the leak noise with P(u_L = 1) = lambda_L. Marginalising the noise gives
//   P(Y = 0 | x) = lambda_L * prod_{i : x_i = 1} lambda_i.
// Risk factors are roots carrying P(R = 1) directly.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "cfdx/errors.hpp"

namespace cfdx {

enum class Layer : std::uint8_t { risk, disease, symptom };

inline const char* to_string(Layer layer) {
    switch (layer) {
        case Layer::risk: return "risk";
        case Layer::disease: return "disease";
        case Layer::symptom: return "symptom";
    }
    return "?";
}

struct ParentEdge {
    std::string id;
    double lambda = 1.0;  // failure probability of this edge

    friend bool operator==(const ParentEdge&, const ParentEdge&) = default;
};

struct RiskFactor {
    std::string id;
    double prior = 0.0;  // P(R = 1)

    friend bool operator==(const RiskFactor&, const RiskFactor&) = default;
};

struct Disease {
    std::string id;
    double leak = 1.0;  // lambda_L: P(no spontaneous activation)
    std::vector<ParentEdge> parents;  // risk factors

    friend bool operator==(const Disease&, const Disease&) = default;
};

struct Symptom {
    std::string id;
    double leak = 1.0;
    std::vector<ParentEdge> parents;  // diseases

    friend bool operator==(const Symptom&, const Symptom&) = default;
};

// Plain description of a network, as stored on disk. Deterministic edges must
// be encoded with a small positive failure probability (1e-9 is a sensible
// choice); lambda = 0 is rejected by validate_network.
struct NoisyOrNetwork {
    std::vector<RiskFactor> risk_factors;
    std::vector<Disease> diseases;
    std::vector<Symptom> symptoms;

    friend bool operator==(const NoisyOrNetwork&, const NoisyOrNetwork&) = default;
};

// Factual evidence: a partial risk-factor assignment and the positive (S+) and
// negative (S-) symptom sets.
struct Evidence {
    std::map<std::string, int> risks;
    std::set<std::string> positive;
    std::set<std::string> negative;

    friend bool operator==(const Evidence&, const Evidence&) = default;
};

// ---------------------------------------------------------------------------
// Validation

enum class ViolationKind : std::uint8_t {
    duplicate_id,
    empty_id,
    layer_direction,
    dangling_edge,
    duplicate_edge,
    zero_failure_probability,
    probability_out_of_range,
};

inline const char* to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::duplicate_id: return "duplicate id";
        case ViolationKind::empty_id: return "empty id";
        case ViolationKind::layer_direction: return "layer direction";
        case ViolationKind::dangling_edge: return "dangling edge";
        case ViolationKind::duplicate_edge: return "duplicate edge";
        case ViolationKind::zero_failure_probability: return "zero failure probability";
        case ViolationKind::probability_out_of_range: return "probability out of range";
    }
    return "?";
}

struct Violation {
    ViolationKind kind;
    std::string node;
    std::string detail;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }

    bool has(ViolationKind kind) const {
        return std::any_of(violations.begin(), violations.end(),
                           [kind](const Violation& v) { return v.kind == kind; });
    }

    std::string summary() const {
        std::ostringstream out;
        for (const auto& v : violations) {
            out << to_string(v.kind) << " at '" << v.node << "': " << v.detail << '\n';
        }
        return out.str();
    }
};

namespace detail {

inline void check_failure_probability(double lambda, const std::string& node, const std::string& what,
                                      ValidationReport& report) {
    if (lambda == 0.0) {
        report.violations.push_back({ViolationKind::zero_failure_probability, node,
                                     what + " has failure probability 0; use a small epsilon instead"});
    } else if (!(lambda > 0.0 && lambda <= 1.0)) {
        std::ostringstream msg;
        msg << what << " failure probability " << lambda << " not in (0, 1]";
        report.violations.push_back({ViolationKind::probability_out_of_range, node, msg.str()});
    }
}

}  // namespace detail

// Structural and parametric checks. Violations are returned, never thrown.
inline ValidationReport validate_network(const NoisyOrNetwork& net) {
    ValidationReport report;
    std::unordered_map<std::string, Layer> layer_of;

    auto register_id = [&](const std::string& id, Layer layer) {
        if (id.empty()) {
            report.violations.push_back({ViolationKind::empty_id, id, std::string("empty ") + to_string(layer) + " id"});
            return;
        }
        auto [it, inserted] = layer_of.emplace(id, layer);
        if (!inserted) {
            report.violations.push_back({ViolationKind::duplicate_id, id,
                                         std::string("id already used by a ") + to_string(it->second)});
        }
    };
    for (const auto& r : net.risk_factors) register_id(r.id, Layer::risk);
    for (const auto& d : net.diseases) register_id(d.id, Layer::disease);
    for (const auto& s : net.symptoms) register_id(s.id, Layer::symptom);

    for (const auto& r : net.risk_factors) {
        if (!(r.prior >= 0.0 && r.prior <= 1.0)) {
            std::ostringstream msg;
            msg << "prior " << r.prior << " not in [0, 1]";
            report.violations.push_back({ViolationKind::probability_out_of_range, r.id, msg.str()});
        }
    }

    auto check_parents = [&](const std::string& child, const std::vector<ParentEdge>& parents, Layer child_layer,
                             Layer expected_parent) {
        std::set<std::string> seen;
        for (const auto& edge : parents) {
            auto it = layer_of.find(edge.id);
            if (it == layer_of.end()) {
                report.violations.push_back({ViolationKind::dangling_edge, child, "unknown parent '" + edge.id + "'"});
            } else if (it->second != expected_parent) {
                report.violations.push_back(
                    {ViolationKind::layer_direction, child,
                     std::string(to_string(it->second)) + " '" + edge.id + "' -> " + to_string(child_layer) +
                         " is not allowed; " + to_string(child_layer) + " parents must be " +
                         to_string(expected_parent) + " nodes"});
            }
            if (!seen.insert(edge.id).second) {
                report.violations.push_back({ViolationKind::duplicate_edge, child, "parent '" + edge.id + "' listed twice"});
            }
            detail::check_failure_probability(edge.lambda, child, "edge from '" + edge.id + "'", report);
        }
    };
    for (const auto& d : net.diseases) {
        detail::check_failure_probability(d.leak, d.id, "leak", report);
        check_parents(d.id, d.parents, Layer::disease, Layer::risk);
    }
    for (const auto& s : net.symptoms) {
        detail::check_failure_probability(s.leak, s.id, "leak", report);
        check_parents(s.id, s.parents, Layer::symptom, Layer::disease);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Indexed, validated form used by every inference routine.

struct IndexedEdge {
    std::size_t node;
    double lambda;
};

struct NodeRef {
    Layer layer;
    std::size_t index;
};

// Evidence with ids resolved to indices. risk_state is -1 for unobserved.
struct ResolvedEvidence {
    std::vector<int> risk_state;
    std::vector<std::size_t> positive;
    std::vector<std::size_t> negative;

    std::size_t unobserved_risks() const {
        return static_cast<std::size_t>(std::count(risk_state.begin(), risk_state.end(), -1));
    }
};

class Model {
public:
    explicit Model(NoisyOrNetwork net) : net_(std::move(net)) {
        auto report = validate_network(net_);
        if (!report.ok()) throw InvalidArgument("invalid network:\n" + report.summary());

        for (std::size_t i = 0; i < net_.risk_factors.size(); ++i)
            index_.emplace(net_.risk_factors[i].id, NodeRef{Layer::risk, i});
        for (std::size_t i = 0; i < net_.diseases.size(); ++i)
            index_.emplace(net_.diseases[i].id, NodeRef{Layer::disease, i});
        for (std::size_t i = 0; i < net_.symptoms.size(); ++i)
            index_.emplace(net_.symptoms[i].id, NodeRef{Layer::symptom, i});

        disease_parents_.resize(net_.diseases.size());
        for (std::size_t d = 0; d < net_.diseases.size(); ++d) {
            for (const auto& e : net_.diseases[d].parents)
                disease_parents_[d].push_back({index_.at(e.id).index, e.lambda});
        }
        symptom_parents_.resize(net_.symptoms.size());
        disease_children_.resize(net_.diseases.size());
        disease_symptom_lambda_.assign(net_.diseases.size() * net_.symptoms.size(), 1.0);
        for (std::size_t s = 0; s < net_.symptoms.size(); ++s) {
            for (const auto& e : net_.symptoms[s].parents) {
                const std::size_t d = index_.at(e.id).index;
                symptom_parents_[s].push_back({d, e.lambda});
                disease_children_[d].push_back({s, e.lambda});
                disease_symptom_lambda_[d * net_.symptoms.size() + s] = e.lambda;
            }
        }
    }

    const NoisyOrNetwork& network() const { return net_; }

    std::size_t num_risks() const { return net_.risk_factors.size(); }
    std::size_t num_diseases() const { return net_.diseases.size(); }
    std::size_t num_symptoms() const { return net_.symptoms.size(); }

    const std::string& risk_id(std::size_t i) const { return net_.risk_factors[i].id; }
    const std::string& disease_id(std::size_t i) const { return net_.diseases[i].id; }
    const std::string& symptom_id(std::size_t i) const { return net_.symptoms[i].id; }

    double risk_prior(std::size_t r) const { return net_.risk_factors[r].prior; }
    double disease_leak(std::size_t d) const { return net_.diseases[d].leak; }
    double symptom_leak(std::size_t s) const { return net_.symptoms[s].leak; }

    const std::vector<IndexedEdge>& disease_parents(std::size_t d) const { return disease_parents_[d]; }
    const std::vector<IndexedEdge>& symptom_parents(std::size_t s) const { return symptom_parents_[s]; }
    const std::vector<IndexedEdge>& disease_children(std::size_t d) const { return disease_children_[d]; }

    // lambda_{D,S}, or 1 when S is not a child of D.
    double lambda(std::size_t disease, std::size_t symptom) const {
        return disease_symptom_lambda_[disease * net_.symptoms.size() + symptom];
    }

    std::optional<NodeRef> find(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t index_of(const std::string& id, Layer layer) const {
        auto ref = find(id);
        if (!ref) throw InvalidArgument("unknown node '" + id + "'");
        if (ref->layer != layer)
            throw InvalidArgument("node '" + id + "' is a " + to_string(ref->layer) + ", expected " + to_string(layer));
        return ref->index;
    }

    // P(D = 1 | risk completion), risks given as 0/1 per risk index.
    double disease_activation(std::size_t d, const std::vector<int>& risks) const {
        double off = disease_leak(d);
        for (const auto& e : disease_parents_[d])
            if (risks[e.node] == 1) off *= e.lambda;
        return 1.0 - off;
    }

    // P(D = 1 | observed risks), unobserved risks marginalised under their
    // independent priors: each contributes (1 - prior) + prior * lambda.
    double disease_marginal(std::size_t d, const std::vector<int>& risk_state) const {
        double off = disease_leak(d);
        for (const auto& e : disease_parents_[d]) {
            const int r = risk_state[e.node];
            if (r == 1) {
                off *= e.lambda;
            } else if (r < 0) {
                const double p = risk_prior(e.node);
                off *= (1.0 - p) + p * e.lambda;
            }
        }
        return 1.0 - off;
    }

    ResolvedEvidence resolve(const Evidence& ev) const {
        ResolvedEvidence out;
        out.risk_state.assign(num_risks(), -1);
        for (const auto& [id, value] : ev.risks) {
            if (value != 0 && value != 1) throw InvalidArgument("risk '" + id + "' must be observed as 0 or 1");
            out.risk_state[index_of(id, Layer::risk)] = value;
        }
        for (const auto& id : ev.positive) {
            if (ev.negative.count(id)) throw InvalidArgument("symptom '" + id + "' is both positive and negative");
            out.positive.push_back(index_of(id, Layer::symptom));
        }
        for (const auto& id : ev.negative) out.negative.push_back(index_of(id, Layer::symptom));
        return out;
    }

private:
    NoisyOrNetwork net_;
    std::unordered_map<std::string, NodeRef> index_;
    std::vector<std::vector<IndexedEdge>> disease_parents_;
    std::vector<std::vector<IndexedEdge>> symptom_parents_;
    std::vector<std::vector<IndexedEdge>> disease_children_;
    std::vector<double> disease_symptom_lambda_;  // [disease][symptom]
};

// Evidence problems as data, mirroring validate_network.
inline std::vector<std::string> validate_evidence(const Model& model, const Evidence& ev) {
    std::vector<std::string> problems;
    auto check = [&](const std::string& id, Layer layer) {
        auto ref = model.find(id);
        if (!ref) {
            problems.push_back("unknown node '" + id + "'");
        } else if (ref->layer != layer) {
            problems.push_back("'" + id + "' is a " + std::string(to_string(ref->layer)) + ", expected " + to_string(layer));
        }
    };
    for (const auto& [id, value] : ev.risks) {
        check(id, Layer::risk);
        if (value != 0 && value != 1) problems.push_back("risk '" + id + "' observed as " + std::to_string(value));
    }
    for (const auto& id : ev.positive) {
        check(id, Layer::symptom);
        if (ev.negative.count(id)) problems.push_back("symptom '" + id + "' in both positive and negative sets");
    }
    for (const auto& id : ev.negative) check(id, Layer::symptom);
    return problems;
}

// P(node = 0 | parents) = lambda_L * prod_{on parents} lambda. parent_state
// must assign every modelled parent; extra entries are ignored. Risk factors
// have no parents and return 1 - prior.
inline double off_probability(const Model& model, const std::string& node,
                              const std::map<std::string, int>& parent_state) {
    auto ref = model.find(node);
    if (!ref) throw InvalidArgument("unknown node '" + node + "'");
    auto product = [&](double leak, const std::vector<ParentEdge>& parents) {
        double off = leak;
        for (const auto& e : parents) {
            auto it = parent_state.find(e.id);
            if (it == parent_state.end())
                throw InvalidArgument("missing assignment for parent '" + e.id + "' of '" + node + "'");
            if (it->second == 1) off *= e.lambda;
        }
        return off;
    };
    switch (ref->layer) {
        case Layer::risk: return 1.0 - model.risk_prior(ref->index);
        case Layer::disease: {
            const auto& d = model.network().diseases[ref->index];
            return product(d.leak, d.parents);
        }
        case Layer::symptom: {
            const auto& s = model.network().symptoms[ref->index];
            return product(s.leak, s.parents);
        }
    }
    return 1.0;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const NoisyOrNetwork& net) {
    using nlohmann::json;
    json out;
    out["risk_factors"] = json::array();
    for (const auto& r : net.risk_factors) out["risk_factors"].push_back({{"id", r.id}, {"prior", r.prior}});
    auto edges = [](const std::vector<ParentEdge>& parents) {
        json arr = json::array();
        for (const auto& e : parents) arr.push_back({{"id", e.id}, {"lambda", e.lambda}});
        return arr;
    };
    out["diseases"] = json::array();
    for (const auto& d : net.diseases) out["diseases"].push_back({{"id", d.id}, {"leak", d.leak}, {"parents", edges(d.parents)}});
    out["symptoms"] = json::array();
    for (const auto& s : net.symptoms) out["symptoms"].push_back({{"id", s.id}, {"leak", s.leak}, {"parents", edges(s.parents)}});
    return out;
}

inline NoisyOrNetwork network_from_json(const nlohmann::json& j) {
    NoisyOrNetwork net;
    try {
        auto edges = [](const nlohmann::json& node) {
            std::vector<ParentEdge> parents;
            if (node.contains("parents")) {
                for (const auto& e : node.at("parents"))
                    parents.push_back({e.at("id").get<std::string>(), e.at("lambda").get<double>()});
            }
            return parents;
        };
        if (j.contains("risk_factors")) {
            for (const auto& r : j.at("risk_factors"))
                net.risk_factors.push_back({r.at("id").get<std::string>(), r.at("prior").get<double>()});
        }
        for (const auto& d : j.at("diseases"))
            net.diseases.push_back({d.at("id").get<std::string>(), d.at("leak").get<double>(), edges(d)});
        for (const auto& s : j.at("symptoms"))
            net.symptoms.push_back({s.at("id").get<std::string>(), s.at("leak").get<double>(), edges(s)});
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed model JSON: ") + e.what());
    }
    return net;
}

inline nlohmann::json to_json(const Evidence& ev) {
    nlohmann::json out;
    out["risks"] = nlohmann::json::object();
    for (const auto& [id, v] : ev.risks) out["risks"][id] = v;
    out["positive"] = ev.positive;
    out["negative"] = ev.negative;
    return out;
}

inline Evidence evidence_from_json(const nlohmann::json& j) {
    Evidence ev;
    try {
        if (j.contains("risks")) {
            for (const auto& [id, v] : j.at("risks").items()) ev.risks[id] = v.get<int>();
        }
        if (j.contains("positive")) {
            for (const auto& id : j.at("positive")) ev.positive.insert(id.get<std::string>());
        }
        if (j.contains("negative")) {
            for (const auto& id : j.at("negative")) ev.negative.insert(id.get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed evidence JSON: ") + e.what());
    }
    return ev;
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidArgument("'" + path + "' is not valid JSON: " + e.what());
    }
}

inline NoisyOrNetwork load_network(const std::string& path) { return network_from_json(read_json_file(path)); }

inline void save_network(const NoisyOrNetwork& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write '" + path + "'");
    out << to_json(net).dump(2) << '\n';
}

inline Evidence load_evidence(const std::string& path) { return evidence_from_json(read_json_file(path)); }

}  // namespace cfdx
