#pragma once

// Exact inference for three-layer noisy-OR networks by inclusion-exclusion
// over the positive findings (quickscore). For a risk completion r write
//   p_j(r) = 1 - lambda_{L,D_j} * prod_i lambda_{R_i,D_j}^{r_i}
// and, for a set O of findings required off,
//   P(O = 0 | r)          = prod_{S in O} lambda_{L,S} * prod_j f_j(O)
//   P(O = 0, D_k = 1 | r) = prod_{S in O} lambda_{L,S} * p_k c_k(O) * prod_{j != k} f_j(O)
// with c_j(O) = prod_{S in O} lambda_{j,S} and f_j = (1 - p_j) + p_j c_j.
// The evidence likelihood and every numerator below are signed sums of these
// over O = S- u Z for all Z subset of S+, weighted by (-1)^|Z|.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "cfdx/errors.hpp"
#include "cfdx/model.hpp"
#include "cfdx/parallel.hpp"
#include "cfdx/subset_walk.hpp"

namespace cfdx {

enum class Summation : std::uint8_t {
    compensated,       // Neumaier summation in enumeration order
    sorted_magnitude,  // collect every term, sum by increasing |term| (diagnostics only)
};

// counterfactual: the sufficiency / disablement weights tau and gamma.
// unit: tau = gamma = 1, which turns both measures into the posterior.
enum class MeasureWeights : std::uint8_t { counterfactual, unit };

struct InferenceOptions {
    std::size_t max_positive = 25;
    std::size_t max_unobserved_risks = 20;
    unsigned threads = 1;  // 0 = default_thread_count()
    SubsetWalk walk = default_subset_walk;
    Summation summation = Summation::compensated;
    MeasureWeights weights = MeasureWeights::counterfactual;
    // Admissible overshoot of a final value past its range before clamping
    // turns into a NumericsError.
    double clamp_tolerance = 1e-9;
    // Largest certified relative rounding error of the likelihood that is
    // still reported; beyond it scoring throws NumericsError.
    double max_rounding_error = 0.1;
    // Recompute in long double before giving up on an ill-conditioned sum,
    // unless that would walk more than this many (subset, risk completion)
    // pairs.
    bool extended_fallback = true;
    std::uint64_t extended_max_work = std::uint64_t{1} << 21;
};

// ---------------------------------------------------------------------------
// Risk completions

// The unobserved risk factors are independent roots, so P(r | observed) is a
// product of priors over the unobserved ones.
class RiskCompletions {
public:
    RiskCompletions(const Model& model, const std::vector<int>& risk_state, std::size_t cap)
        : model_(&model), base_(risk_state) {
        if (base_.size() != model.num_risks()) throw InvalidArgument("risk state has wrong size");
        for (std::size_t r = 0; r < base_.size(); ++r) {
            if (base_[r] < 0) {
                free_.push_back(r);
            } else {
                observed_ *= base_[r] ? model.risk_prior(r) : 1.0 - model.risk_prior(r);
            }
        }
        if (free_.size() > cap)
            throw CapExceeded(std::to_string(free_.size()) + " unobserved risk factors exceed the cap of " +
                              std::to_string(cap));
    }

    std::uint64_t count() const { return std::uint64_t{1} << free_.size(); }

    // Fills `risks` with completion c and returns its joint probability with
    // the observed risks.
    double get(std::uint64_t c, std::vector<int>& risks) const {
        risks = base_;
        double w = observed_;
        for (std::size_t i = 0; i < free_.size(); ++i) {
            const bool on = (c >> i) & 1U;
            const double p = model_->risk_prior(free_[i]);
            risks[free_[i]] = on ? 1 : 0;
            w *= on ? p : 1.0 - p;
        }
        return w;
    }

private:
    const Model* model_;
    std::vector<int> base_;
    std::vector<std::size_t> free_;
    double observed_ = 1.0;
};

// ---------------------------------------------------------------------------
// joint_off_marginal

// P(off_symptoms all 0 [, D_target = 1], risk evidence), by direct summation
// over the risk completions. No subset enumeration is involved.
inline double joint_off_marginal(const Model& model, const std::vector<std::size_t>& off_symptoms,
                                 std::optional<std::size_t> target, const std::vector<int>& risk_state,
                                 std::size_t max_unobserved_risks = 20) {
    for (auto s : off_symptoms)
        if (s >= model.num_symptoms()) throw InvalidArgument("symptom index out of range");
    if (target && *target >= model.num_diseases()) throw InvalidArgument("disease index out of range");

    double leak = 1.0;
    for (auto s : off_symptoms) leak *= model.symptom_leak(s);
    std::vector<double> c(model.num_diseases(), 1.0);
    for (std::size_t j = 0; j < model.num_diseases(); ++j)
        for (auto s : off_symptoms) c[j] *= model.lambda(j, s);

    RiskCompletions completions(model, risk_state, max_unobserved_risks);
    std::vector<int> risks;
    CompensatedSum total;
    for (std::uint64_t i = 0; i < completions.count(); ++i) {
        const double w = completions.get(i, risks);
        if (w == 0.0) continue;
        double term = w * leak;
        for (std::size_t j = 0; j < model.num_diseases(); ++j) {
            const double p = model.disease_activation(j, risks);
            term *= (target && *target == j) ? p * c[j] : (1.0 - p) + p * c[j];
        }
        total.add(term);
    }
    return total.value();
}

inline double joint_off_marginal(const Model& model, const std::vector<std::string>& off_symptoms,
                                 const std::optional<std::string>& target, const std::map<std::string, int>& risks,
                                 std::size_t max_unobserved_risks = 20) {
    std::vector<std::size_t> off;
    for (const auto& id : off_symptoms) off.push_back(model.index_of(id, Layer::symptom));
    std::optional<std::size_t> t;
    if (target) t = model.index_of(*target, Layer::disease);
    Evidence ev;
    ev.risks = risks;
    return joint_off_marginal(model, off, t, model.resolve(ev).risk_state, max_unobserved_risks);
}

// ---------------------------------------------------------------------------
// The shared subset kernel

// Raw signed sums. Everything is relative to prod_{S in S-} lambda_{L,S},
// which is carried separately as log_scale so long negative lists cannot
// underflow the sums.
template <typename Real>
struct BasicSubsetSums {
    BasicCompensatedSum<Real> likelihood;
    std::vector<BasicCompensatedSum<Real>> posterior;
    std::vector<BasicCompensatedSum<Real>> sufficiency;
    std::vector<BasicCompensatedSum<Real>> disablement;
    double log_scale = 0.0;
    // Unit roundoff of the arithmetic the terms were computed in, and the
    // length of the uncompensated runs in the summation.
    double epsilon = std::numeric_limits<Real>::epsilon();
    std::size_t plain_run = 1;
};

using SubsetSums = BasicSubsetSums<double>;

// Final, normalised values for one evidence set. Vectors are indexed like
// `diseases` (all model diseases unless a subset was requested).
struct ExactScores {
    double likelihood = 0.0;
    bool zero_likelihood = false;
    std::size_t positives = 0;
    // sum |terms| / |sum| of the likelihood's signed subset sum: rounding
    // error relative to the result is about this many machine epsilons.
    double cancellation = 1.0;
    // Bound on the relative rounding error of the likelihood; the ratios
    // (posterior, measures) carry about twice this.
    double error_bound = 0.0;
    // The double-precision walk was too ill-conditioned and the sums were
    // recomputed in long double.
    bool extended_precision = false;
    std::vector<std::size_t> diseases;
    std::vector<double> posterior;
    std::vector<double> sufficiency;
    std::vector<double> disablement;
};

namespace detail {

template <typename Real>
struct CompletionTerms {
    Real weight;
    std::vector<Real> p;
    std::vector<Real> q;  // 1 - p
};

// Accumulates one subset's terms, laid out as [lik, post_0..T-1, suff_0..T-1,
// dis_0..T-1]. Compensated mode keeps branch-free TwoSum accumulators side by
// side so the update vectorises; sorted mode keeps the terms for a later
// magnitude-ordered pass. Without SIMD (long double) TwoSum dominates, so runs
// of `run` subsets are first added plainly; the error bound accounts for it.
template <typename Real>
class TermSink {
public:
    static constexpr std::size_t run = std::is_same_v<Real, double> ? 1 : 16;

    TermSink(std::size_t targets, bool keep_terms)
        : targets_(targets), keep_(keep_terms), sum_(1 + 3 * targets), comp_(sum_.size()), abs_(sum_.size()) {
        if (keep_) terms_.resize(sum_.size());
        if constexpr (run > 1) pending_.resize(sum_.size());
    }

    std::size_t width() const { return sum_.size(); }

    void add(const std::vector<Real>& x, std::size_t used) {
        if (keep_) {
            for (std::size_t i = 0; i < used; ++i) terms_[i].push_back(x[i]);
            return;
        }
        Real* m = abs_.data();
        const Real* v = x.data();
        for (std::size_t i = 0; i < used; ++i) m[i] += std::fabs(v[i]);
        if constexpr (run == 1) {
            two_sum(v, used);
        } else {
            Real* p = pending_.data();
            for (std::size_t i = 0; i < used; ++i) p[i] += v[i];
            used_ = std::max(used_, used);
            if (++count_ == run) flush();
        }
    }

    BasicSubsetSums<Real> sums() {
        if constexpr (run > 1) flush();
        BasicSubsetSums<Real> out;
        out.plain_run = run;
        auto at = [&](std::size_t i) { return BasicCompensatedSum<Real>::from_parts(sum_[i], comp_[i], abs_[i]); };
        out.likelihood = at(0);
        for (std::size_t t = 0; t < targets_; ++t) {
            out.posterior.push_back(at(1 + t));
            out.sufficiency.push_back(at(1 + targets_ + t));
            out.disablement.push_back(at(1 + 2 * targets_ + t));
        }
        return out;
    }

    std::vector<std::vector<Real>>& terms() { return terms_; }

private:
    void two_sum(const Real* v, std::size_t used) {
        Real* s = sum_.data();
        Real* c = comp_.data();
        for (std::size_t i = 0; i < used; ++i) {
            const Real t = s[i] + v[i];
            const Real bp = t - s[i];
            c[i] += (s[i] - (t - bp)) + (v[i] - bp);
            s[i] = t;
        }
    }

    void flush() {
        two_sum(pending_.data(), used_);
        std::fill(pending_.begin(), pending_.end(), Real(0));
        count_ = 0;
    }

    std::size_t targets_;
    bool keep_;
    std::vector<Real> sum_, comp_, abs_, pending_;
    std::size_t count_ = 0, used_ = 0;
    std::vector<std::vector<Real>> terms_;
};

template <typename Real>
BasicCompensatedSum<Real> sum_by_magnitude(std::vector<Real>& terms) {
    std::stable_sort(terms.begin(), terms.end(), [](Real a, Real b) { return std::fabs(a) < std::fabs(b); });
    BasicCompensatedSum<Real> s;
    for (Real x : terms) s.add(x);
    return s;
}

// One subset's contribution, linear space. Fills `out` in TermSink layout and
// returns how many leading entries are in use.
template <typename Real>
std::size_t add_subset_terms(const BasicSubsetTables<Real>& tables, const CompletionTerms<Real>& comp,
                             const std::vector<std::size_t>& targets, MeasureWeights weights,
                             const BasicSubsetState<Real>& st, std::vector<Real>& f, std::vector<Real>& suffix,
                             std::vector<Real>& out) {
    const std::size_t n_dis = tables.diseases;
    for (std::size_t j = 0; j < n_dis; ++j) f[j] = comp.q[j] + comp.p[j] * st.product[j];
    // suffix[j] = prod_{i >= j} f_i
    suffix[n_dis] = 1;
    for (std::size_t j = n_dis; j-- > 0;) suffix[j] = suffix[j + 1] * f[j];

    const Real signed_weight = (st.size & 1 ? -comp.weight : comp.weight) * st.leak;
    out[0] = signed_weight * suffix[0];
    const std::size_t nt = targets.size();
    if (nt == 0) return 1;

    // prefix products walk forward over targets, which are sorted ascending.
    Real prefix = 1;
    std::size_t j = 0;
    for (std::size_t t = 0; t < nt; ++t) {
        const std::size_t k = targets[t];
        for (; j < k; ++j) prefix *= f[j];
        out[1 + t] = signed_weight * comp.p[k] * st.product[k] * prefix * suffix[k + 1];
    }
    for (std::size_t t = 0; t < nt; ++t) {
        const Real a = out[1 + t];
        const std::size_t k = targets[t];
        if (weights == MeasureWeights::unit) {
            out[1 + nt + t] = a;
            out[1 + 2 * nt + t] = a;
        } else {
            out[1 + nt + t] = a * (tables.tau_total[k] - st.tau_removed[k]);
            out[1 + 2 * nt + t] = a * st.gamma[k];
        }
    }
    return 1 + 3 * nt;
}

// Same contribution recomputed from scratch with logarithms, used when a
// running product has underflowed.
template <typename Real>
std::size_t add_subset_terms_log(const BasicSubsetTables<Real>& tables, const std::vector<Real>& log_base,
                                 const CompletionTerms<Real>& comp, const std::vector<std::size_t>& targets,
                                 MeasureWeights weights, const BasicSubsetState<Real>& st, std::vector<Real>& out) {
    const std::size_t n_dis = tables.diseases;
    Real log_leak = 0;
    std::vector<Real> log_c(log_base);
    for (std::size_t i = 0; i < tables.positives; ++i) {
        if (!((st.subset >> i) & 1U)) continue;
        log_leak += std::log(tables.leak[i]);
        for (std::size_t j = 0; j < n_dis; ++j) log_c[j] += std::log(tables.lambda_at(i, j));
    }
    std::vector<Real> log_f(n_dis);
    Real log_all = 0;
    for (std::size_t j = 0; j < n_dis; ++j) {
        const Real pc = comp.p[j] == 0 ? Real(0) : std::exp(std::log(comp.p[j]) + log_c[j]);
        const Real fj = comp.q[j] + pc;
        log_f[j] = fj > 0.0 ? std::log(fj) : std::log(comp.p[j]) + log_c[j];
        log_all += log_f[j];
    }
    const Real sign = st.size & 1 ? -1 : 1;
    const Real log_w = std::log(comp.weight) + log_leak;
    out[0] = sign * std::exp(log_w + log_all);
    const std::size_t nt = targets.size();
    for (std::size_t t = 0; t < nt; ++t) {
        const std::size_t k = targets[t];
        const Real a =
            comp.p[k] == 0 ? Real(0) : sign * std::exp(log_w + std::log(comp.p[k]) + log_c[k] + log_all - log_f[k]);
        out[1 + t] = a;
        if (weights == MeasureWeights::unit) {
            out[1 + nt + t] = a;
            out[1 + 2 * nt + t] = a;
        } else {
            out[1 + nt + t] = a * (tables.tau_total[k] - st.tau_removed[k]);
            out[1 + 2 * nt + t] = a * st.gamma[k];
        }
    }
    return nt == 0 ? 1 : 1 + 3 * nt;
}

template <typename Real>
BasicSubsetTables<Real> build_tables(const Model& model, const ResolvedEvidence& ev) {
    BasicSubsetTables<Real> t;
    t.positives = ev.positive.size();
    t.diseases = model.num_diseases();
    t.lambda.resize(t.positives * t.diseases);
    t.tau_step.resize(t.lambda.size());
    t.gamma_step.resize(t.lambda.size());
    t.leak.resize(t.positives);
    t.base_product.assign(t.diseases, Real(1));
    t.tau_total.assign(t.diseases, Real(0));
    for (std::size_t i = 0; i < t.positives; ++i) {
        const std::size_t s = ev.positive[i];
        t.leak[i] = model.symptom_leak(s);
        for (std::size_t j = 0; j < t.diseases; ++j) {
            const Real lam = model.lambda(j, s);
            t.lambda[i * t.diseases + j] = lam;
            t.tau_step[i * t.diseases + j] = 1 - lam;
            t.gamma_step[i * t.diseases + j] = 1 - 1 / lam;
            t.tau_total[j] += 1 - lam;
        }
    }
    for (std::size_t j = 0; j < t.diseases; ++j)
        for (auto s : ev.negative) t.base_product[j] *= model.lambda(j, s);
    return t;
}

inline void check_evidence_caps(const Model& model, const ResolvedEvidence& ev, const InferenceOptions& opts) {
    if (ev.positive.size() > opts.max_positive)
        throw CapExceeded(std::to_string(ev.positive.size()) + " positive findings exceed the subset cap of " +
                          std::to_string(opts.max_positive));
    if (ev.positive.size() > 62) throw CapExceeded("more than 62 positive findings cannot be enumerated");
    if (ev.risk_state.size() != model.num_risks()) throw InvalidArgument("risk state has wrong size");
}

}  // namespace detail

namespace detail {

template <typename Real>
BasicSubsetSums<Real> subset_sums_in(const Model& model, const ResolvedEvidence& ev,
                                     const std::vector<std::size_t>& targets, const InferenceOptions& opts) {
    detail::check_evidence_caps(model, ev, opts);
    for (auto k : targets)
        if (k >= model.num_diseases()) throw InvalidArgument("disease index out of range");
    if (!std::is_sorted(targets.begin(), targets.end())) throw InvalidArgument("targets must be sorted");

    const auto tables = detail::build_tables<Real>(model, ev);
    const RiskCompletions completions(model, ev.risk_state, opts.max_unobserved_risks);
    const std::size_t n_dis = model.num_diseases();

    std::vector<Real> log_base(n_dis, Real(0));
    for (std::size_t j = 0; j < n_dis; ++j)
        for (auto s : ev.negative) log_base[j] += std::log(Real(model.lambda(j, s)));

    // Work items are (block of subsets, chunk of risk completions); the split
    // depends only on the evidence, so results do not depend on threads.
    const BlockPlan plan = BlockPlan::for_positives(ev.positive.size());
    const std::uint64_t n_comp = completions.count();
    constexpr std::uint64_t chunk_size = 256;
    const std::uint64_t comp_chunks = (n_comp + chunk_size - 1) / chunk_size;
    const std::size_t items = plan.blocks() * comp_chunks;
    const bool sorted = opts.summation == Summation::sorted_magnitude;
    if (sorted) {
        const double total_terms = static_cast<double>(comp_chunks) *
                                   std::ldexp(1.0, static_cast<int>(ev.positive.size())) *
                                   static_cast<double>(1 + 3 * targets.size());
        if (total_terms > static_cast<double>(1 << 26))
            throw CapExceeded("sorted-magnitude summation would store too many terms");
    }

    std::vector<detail::TermSink<Real>> sinks;
    sinks.reserve(items);
    for (std::size_t i = 0; i < items; ++i) sinks.emplace_back(targets.size(), sorted);

    parallel_for(items, sorted ? 1U : opts.threads, [&](std::size_t item) {
        const std::size_t block = item / comp_chunks;
        const std::uint64_t chunk = item % comp_chunks;
        const std::uint64_t c_begin = chunk * chunk_size;
        const std::uint64_t c_end = std::min(n_comp, c_begin + chunk_size);

        std::vector<detail::CompletionTerms<Real>> comps;
        std::vector<int> risks;
        for (std::uint64_t c = c_begin; c < c_end; ++c) {
            detail::CompletionTerms<Real> comp{Real(completions.get(c, risks)), std::vector<Real>(n_dis),
                                               std::vector<Real>(n_dis)};
            if (comp.weight == 0) continue;
            for (std::size_t j = 0; j < n_dis; ++j) {
                Real off = model.disease_leak(j);
                for (const auto& e : model.disease_parents(j))
                    if (risks[e.node] == 1) off *= e.lambda;
                comp.q[j] = off;
                comp.p[j] = 1 - off;
            }
            comps.push_back(std::move(comp));
        }
        if (comps.empty()) return;

        std::vector<Real> f(n_dis), suffix(n_dis + 1);
        auto& sink = sinks[item];
        std::vector<Real> terms(sink.width()), acc(sink.width());
        walk_block(tables, opts.walk, plan, block, [&](const BasicSubsetState<Real>& st) {
            // Within one subset every completion's term has the same sign, so
            // a plain sum over completions loses nothing to cancellation.
            if (comps.size() == 1) {
                const auto& comp = comps.front();
                sink.add(terms, st.underflowed() ? detail::add_subset_terms_log(tables, log_base, comp, targets,
                                                                                  opts.weights, st, terms)
                                                 : detail::add_subset_terms(tables, comp, targets, opts.weights, st,
                                                                            f, suffix, terms));
                return;
            }
            std::size_t used = 0;
            std::fill(acc.begin(), acc.end(), Real(0));
            for (const auto& comp : comps) {
                used = st.underflowed()
                           ? detail::add_subset_terms_log(tables, log_base, comp, targets, opts.weights, st, terms)
                           : detail::add_subset_terms(tables, comp, targets, opts.weights, st, f, suffix, terms);
                for (std::size_t i = 0; i < used; ++i) acc[i] += terms[i];
            }
            sink.add(acc, used);
        });
    });

    BasicSubsetSums<Real> out;
    out.posterior.resize(targets.size());
    out.sufficiency.resize(targets.size());
    out.disablement.resize(targets.size());
    for (auto s : ev.negative) out.log_scale += std::log(model.symptom_leak(s));
    if (sorted) {
        std::vector<std::vector<Real>> all(1 + 3 * targets.size());
        for (auto& sink : sinks)
            for (std::size_t q = 0; q < all.size(); ++q)
                all[q].insert(all[q].end(), sink.terms()[q].begin(), sink.terms()[q].end());
        out.likelihood = detail::sum_by_magnitude(all[0]);
        for (std::size_t t = 0; t < targets.size(); ++t) {
            out.posterior[t] = detail::sum_by_magnitude(all[1 + t]);
            out.sufficiency[t] = detail::sum_by_magnitude(all[1 + targets.size() + t]);
            out.disablement[t] = detail::sum_by_magnitude(all[1 + 2 * targets.size() + t]);
        }
        return out;
    }
    out.plain_run = detail::TermSink<Real>::run;
    for (auto& sink : sinks) {
        const auto s = sink.sums();
        out.likelihood.add(s.likelihood);
        for (std::size_t t = 0; t < targets.size(); ++t) {
            out.posterior[t].add(s.posterior[t]);
            out.sufficiency[t].add(s.sufficiency[t]);
            out.disablement[t].add(s.disablement[t]);
        }
    }
    return out;
}

}  // namespace detail

// Runs the inclusion-exclusion walk once and returns the raw signed sums for
// the likelihood and, for every disease in `targets`, the posterior,
// sufficiency and disablement numerators.
inline SubsetSums subset_sums(const Model& model, const ResolvedEvidence& ev, const std::vector<std::size_t>& targets,
                              const InferenceOptions& opts = {}) {
    return detail::subset_sums_in<double>(model, ev, targets, opts);
}

namespace detail {

inline double clamp_checked(double value, double lo, double hi, double tol, const char* what) {
    if (std::isnan(value)) throw NumericsError(std::string(what) + " is NaN");
    if (value < lo - tol || value > hi + tol)
        throw NumericsError(std::string(what) + " = " + std::to_string(value) + " outside [" + std::to_string(lo) +
                            ", " + std::to_string(hi) + "]");
    return std::clamp(value, lo, hi);
}

inline double rounding_bound(double cancellation, std::size_t positives, double epsilon, std::size_t plain_run = 1) {
    return epsilon * cancellation * (16.0 * static_cast<double>(1 + positives) + static_cast<double>(plain_run - 1));
}

[[noreturn]] inline void throw_cancellation(std::size_t positives, double bound, double limit, const char* note) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "likelihood lost to cancellation: %zu positive findings, relative rounding bound %.3g exceeds %.3g%s",
                  positives, bound, limit, note);
    throw NumericsError(buf);
}

// sum |terms| / |sum| of the likelihood; infinite once nothing is left.
template <typename Real>
double cancellation_of(const BasicSubsetSums<Real>& sums) {
    const Real lik = sums.likelihood.value();
    return lik > 0 ? static_cast<double>(sums.likelihood.magnitude() / lik) : std::numeric_limits<double>::infinity();
}

// Whether the evidence has positive probability. Turning more diseases on
// only helps positive findings and never makes a negative one impossible
// (failure probabilities are positive), so it is enough to switch on every
// disease that can be on.
inline bool evidence_possible(const Model& model, const ResolvedEvidence& ev) {
    std::vector<int> risk_on(model.num_risks());
    for (std::size_t r = 0; r < model.num_risks(); ++r) {
        const double prior = model.risk_prior(r);
        if ((ev.risk_state[r] == 1 && prior == 0.0) || (ev.risk_state[r] == 0 && prior == 1.0)) return false;
        risk_on[r] = ev.risk_state[r] >= 0 ? ev.risk_state[r] : prior > 0.0;
    }
    std::vector<int> can_be_on(model.num_diseases());
    for (std::size_t d = 0; d < model.num_diseases(); ++d) {
        bool on = model.disease_leak(d) < 1.0;
        for (const auto& e : model.disease_parents(d)) on = on || (risk_on[e.node] && e.lambda < 1.0);
        can_be_on[d] = on;
    }
    for (auto s : ev.positive) {
        bool on = model.symptom_leak(s) < 1.0;
        for (const auto& e : model.symptom_parents(s)) on = on || (can_be_on[e.node] && e.lambda < 1.0);
        if (!on) return false;
    }
    return true;
}

}  // namespace detail

template <typename Real>
ExactScores finalize_scores(const BasicSubsetSums<Real>& sums, const std::vector<std::size_t>& targets,
                            std::size_t positives, const InferenceOptions& opts) {
    ExactScores out;
    out.positives = positives;
    out.diseases = targets;
    // Only called for evidence that is structurally possible, so a
    // non-positive sum means the result drowned in rounding noise.
    out.cancellation = detail::cancellation_of(sums);
    out.error_bound = detail::rounding_bound(out.cancellation, positives, sums.epsilon, sums.plain_run);
    if (!(out.error_bound <= opts.max_rounding_error))
        detail::throw_cancellation(positives, out.error_bound, opts.max_rounding_error, "");
    const Real lik_rel = sums.likelihood.value();
    out.likelihood = detail::clamp_checked(static_cast<double>(lik_rel) * std::exp(sums.log_scale), 0.0, 1.0, 1e-12,
                                           "evidence likelihood");
    const double bound = static_cast<double>(positives);
    // Ratios may overshoot their range by the rounding error of both sums.
    const double tol = std::max(opts.clamp_tolerance, 4.0 * out.error_bound);
    auto ratio = [&](const BasicCompensatedSum<Real>& x) { return static_cast<double>(x.value() / lik_rel); };
    for (std::size_t t = 0; t < targets.size(); ++t) {
        out.posterior.push_back(detail::clamp_checked(ratio(sums.posterior[t]), 0.0, 1.0, tol, "posterior"));
        const double suff_hi = opts.weights == MeasureWeights::unit ? 1.0 : bound;
        out.sufficiency.push_back(detail::clamp_checked(ratio(sums.sufficiency[t]), 0.0, suff_hi,
                                                        tol * std::max(1.0, bound), "expected sufficiency"));
        out.disablement.push_back(detail::clamp_checked(ratio(sums.disablement[t]), 0.0, suff_hi,
                                                        tol * std::max(1.0, bound), "expected disablement"));
    }
    return out;
}

// Likelihood, posterior, sufficiency and disablement of every disease in
// `targets` (all diseases when empty) from a single subset walk.
inline ExactScores score_evidence(const Model& model, const ResolvedEvidence& ev,
                                  std::optional<std::vector<std::size_t>> targets = std::nullopt,
                                  const InferenceOptions& opts = {}) {
    std::vector<std::size_t> t;
    if (targets) {
        t = *targets;
        std::sort(t.begin(), t.end());
        t.erase(std::unique(t.begin(), t.end()), t.end());
    } else {
        t.resize(model.num_diseases());
        for (std::size_t j = 0; j < t.size(); ++j) t[j] = j;
    }
    if (!detail::evidence_possible(model, ev)) {
        ExactScores out;
        out.positives = ev.positive.size();
        out.diseases = t;
        out.zero_likelihood = true;
        return out;
    }
    const auto sums = subset_sums(model, ev, t, opts);
    const std::size_t n = ev.positive.size();
    const double bound = detail::rounding_bound(detail::cancellation_of(sums), n, sums.epsilon);
    constexpr bool wider = std::numeric_limits<long double>::digits > std::numeric_limits<double>::digits;
    if (wider && opts.extended_fallback && !(bound <= opts.max_rounding_error)) {
        // The true likelihood is at most |value| plus the double error, which
        // bounds the cancellation from below: skip hopeless reruns.
        const double mag = static_cast<double>(sums.likelihood.magnitude());
        const double v = std::fabs(static_cast<double>(sums.likelihood.value()));
        const double slack = detail::rounding_bound(1.0, n, sums.epsilon) * mag;
        const double best = detail::rounding_bound(mag / (v + slack), n, std::numeric_limits<long double>::epsilon(),
                                                   detail::TermSink<long double>::run);
        if (!(best <= opts.max_rounding_error))
            detail::throw_cancellation(n, bound, opts.max_rounding_error, " even in long double");
        const double work = std::ldexp(
            static_cast<double>(RiskCompletions(model, ev.risk_state, opts.max_unobserved_risks).count()),
            static_cast<int>(n));
        if (work > static_cast<double>(opts.extended_max_work))
            detail::throw_cancellation(n, bound, opts.max_rounding_error,
                                       "; long double rerun over the work budget");
        // x87 division is slow; the stack walk never divides.
        InferenceOptions wide = opts;
        wide.walk = SubsetWalk::divide_free;
        auto out = finalize_scores(detail::subset_sums_in<long double>(model, ev, t, wide), t, n, opts);
        out.extended_precision = true;
        return out;
    }
    return finalize_scores(sums, t, n, opts);
}

inline ExactScores score_evidence(const Model& model, const Evidence& ev, const InferenceOptions& opts = {}) {
    return score_evidence(model, model.resolve(ev), std::nullopt, opts);
}

// P(S+ = 1, S- = 0 | R). Returns 0 for evidence the model cannot produce.
inline double evidence_likelihood(const Model& model, const Evidence& ev, const InferenceOptions& opts = {}) {
    return score_evidence(model, model.resolve(ev), std::vector<std::size_t>{}, opts).likelihood;
}

inline void require_positive_likelihood(const ExactScores& scores) {
    if (scores.zero_likelihood) throw ZeroLikelihood("evidence has zero probability under the model");
}

// P(D_k = 1 | evidence).
inline double disease_posterior(const Model& model, const Evidence& ev, const std::string& disease,
                                const InferenceOptions& opts = {}) {
    const std::size_t k = model.index_of(disease, Layer::disease);
    const auto scores = score_evidence(model, model.resolve(ev), std::vector<std::size_t>{k}, opts);
    require_positive_likelihood(scores);
    return scores.posterior[0];
}

}  // namespace cfdx
