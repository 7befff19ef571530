#pragma once

// Enumeration of all subsets Z of the positive findings S+, maintaining for
// every disease j the running product prod_{S in S- u Z} lambda_{j,S} and the
// two additive sums the counterfactual weights need.
//
// Two walks are provided. The Gray-code walk flips one finding per step and
// updates each product by a single multiply or divide. The stack walk visits
// subsets in binary counting order and keeps one state per bit level, so it
// never divides and cannot drift. The stack walk is the default when the
// library is built with CFDX_DIVIDE_FREE.
//
// Everything is templated on the scalar type so the kernel can be rerun in
// extended precision when double cancellation is too severe.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace cfdx {

enum class SubsetWalk : std::uint8_t { gray_code, divide_free };

#ifdef CFDX_DIVIDE_FREE
inline constexpr SubsetWalk default_subset_walk = SubsetWalk::divide_free;
#else
inline constexpr SubsetWalk default_subset_walk = SubsetWalk::gray_code;
#endif

// Products below this are treated as underflowed and the affected term is
// recomputed in log space.
inline constexpr double underflow_threshold = 1e-300;

inline constexpr std::uint64_t gray_code(std::uint64_t i) { return i ^ (i >> 1); }

// Neumaier's variant of Kahan summation; handles terms larger than the running
// sum, which inclusion-exclusion produces constantly.
template <typename Real>
class BasicCompensatedSum {
public:
    void add(Real x) {
        const Real t = sum_ + x;
        if (std::fabs(sum_) >= std::fabs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
        abs_ += std::fabs(x);
    }

    void add(const BasicCompensatedSum& other) {
        add(other.sum_);
        add(other.comp_);
        abs_ += other.abs_ - std::fabs(other.sum_) - std::fabs(other.comp_);
    }

    Real value() const { return sum_ + comp_; }

    static BasicCompensatedSum from_parts(Real sum, Real comp, Real magnitude) {
        BasicCompensatedSum s;
        s.sum_ = sum;
        s.comp_ = comp;
        s.abs_ = magnitude;
        return s;
    }

    // Sum of |terms|; bounds the rounding error of value().
    Real magnitude() const { return abs_; }

private:
    Real sum_ = 0;
    Real comp_ = 0;
    Real abs_ = 0;
};

using CompensatedSum = BasicCompensatedSum<double>;

// Per-finding tables for one evidence set. Row i belongs to the i-th positive
// finding, column j to disease j.
template <typename Real>
struct BasicSubsetTables {
    using real = Real;
    std::size_t positives = 0;
    std::size_t diseases = 0;
    std::vector<Real> lambda;        // lambda_{j, S_i}
    std::vector<Real> tau_step;      // 1 - lambda_{j, S_i}
    std::vector<Real> gamma_step;    // 1 - 1 / lambda_{j, S_i}
    std::vector<Real> leak;          // lambda_{L, S_i}
    std::vector<Real> base_product;  // prod_{S in S-} lambda_{j, S}
    std::vector<Real> tau_total;     // sum_i (1 - lambda_{j, S_i})

    Real lambda_at(std::size_t i, std::size_t j) const { return lambda[i * diseases + j]; }
};

using SubsetTables = BasicSubsetTables<double>;

// State of the walk at the current subset Z.
template <typename Real>
struct BasicSubsetState {
    std::uint64_t subset = 0;
    int size = 0;
    Real leak = 1;                   // prod_{S in Z} lambda_{L,S}
    std::vector<Real> product;       // base_product_j * prod_{S in Z} lambda_{j,S}
    std::vector<Real> tau_removed;   // sum_{S in Z} (1 - lambda_{j,S})
    std::vector<Real> gamma;         // sum_{S in Z} (1 - 1/lambda_{j,S})

    bool underflowed() const {
        if (leak < underflow_threshold) return true;
        return std::any_of(product.begin(), product.end(), [](Real p) { return p < underflow_threshold; });
    }
};

using SubsetState = BasicSubsetState<double>;

// Incrementally maintained SubsetState for the Gray-code walk.
template <typename Real>
class BasicSubsetTermCache {
public:
    explicit BasicSubsetTermCache(const BasicSubsetTables<Real>& tables) : tables_(&tables) {
        state_.product.resize(tables.diseases);
        state_.tau_removed.resize(tables.diseases);
        state_.gamma.resize(tables.diseases);
    }

    // Direct computation from scratch.
    void seed(std::uint64_t subset) {
        const auto& t = *tables_;
        state_.subset = subset;
        state_.size = std::popcount(subset);
        state_.leak = 1;
        std::copy(t.base_product.begin(), t.base_product.end(), state_.product.begin());
        std::fill(state_.tau_removed.begin(), state_.tau_removed.end(), Real(0));
        std::fill(state_.gamma.begin(), state_.gamma.end(), Real(0));
        for (std::size_t i = 0; i < t.positives; ++i) {
            if (!((subset >> i) & 1U)) continue;
            state_.leak *= t.leak[i];
            const std::size_t row = i * t.diseases;
            for (std::size_t j = 0; j < t.diseases; ++j) {
                state_.product[j] *= t.lambda[row + j];
                state_.tau_removed[j] += t.tau_step[row + j];
                state_.gamma[j] += t.gamma_step[row + j];
            }
        }
        dirty_ = state_.underflowed();
    }

    // Adds finding i to Z, or removes it if present. After an underflow the
    // cached products no longer carry enough bits to be divided back, so the
    // next step reseeds instead.
    void toggle(std::size_t i) {
        const std::uint64_t next = state_.subset ^ (std::uint64_t{1} << i);
        if (dirty_) {
            seed(next);
            return;
        }
        const auto& t = *tables_;
        const std::size_t row = i * t.diseases;
        if ((next >> i) & 1U) {
            state_.leak *= t.leak[i];
            for (std::size_t j = 0; j < t.diseases; ++j) {
                state_.product[j] *= t.lambda[row + j];
                state_.tau_removed[j] += t.tau_step[row + j];
                state_.gamma[j] += t.gamma_step[row + j];
            }
            ++state_.size;
        } else {
            state_.leak /= t.leak[i];
            for (std::size_t j = 0; j < t.diseases; ++j) {
                state_.product[j] /= t.lambda[row + j];
                state_.tau_removed[j] -= t.tau_step[row + j];
                state_.gamma[j] -= t.gamma_step[row + j];
            }
            --state_.size;
        }
        state_.subset = next;
        dirty_ = state_.underflowed();
    }

    const BasicSubsetState<Real>& state() const { return state_; }

private:
    const BasicSubsetTables<Real>* tables_;
    BasicSubsetState<Real> state_;
    bool dirty_ = false;
};

using SubsetTermCache = BasicSubsetTermCache<double>;

// Splits the 2^n subsets into 2^min(n, max_block_bits) blocks. The split
// depends only on n, never on the worker count.
struct BlockPlan {
    std::size_t high_bits = 0;
    std::size_t low_bits = 0;

    static BlockPlan for_positives(std::size_t n, std::size_t max_block_bits = 6) {
        BlockPlan plan;
        plan.high_bits = std::min(n, max_block_bits);
        plan.low_bits = n - plan.high_bits;
        return plan;
    }

    std::size_t blocks() const { return std::size_t{1} << high_bits; }
};

// Visits every subset in block `block`, calling visit(const BasicSubsetState&).
template <typename Real, typename Visit>
void walk_block(const BasicSubsetTables<Real>& tables, SubsetWalk walk, const BlockPlan& plan, std::size_t block,
                Visit&& visit) {
    const std::size_t low = plan.low_bits;
    const std::uint64_t span = std::uint64_t{1} << low;

    if (walk == SubsetWalk::gray_code) {
        // Gray indices [block * span, (block + 1) * span) cover exactly the
        // subsets whose high bits equal one fixed pattern.
        BasicSubsetTermCache<Real> cache(tables);
        const std::uint64_t first = static_cast<std::uint64_t>(block) * span;
        cache.seed(gray_code(first));
        visit(cache.state());
        for (std::uint64_t idx = first + 1; idx < first + span; ++idx) {
            cache.toggle(static_cast<std::size_t>(std::countr_zero(idx)));
            visit(cache.state());
        }
        return;
    }

    // Divide-free: levels[k] holds the state with low bits >= low - k decided.
    BasicSubsetTermCache<Real> seed_cache(tables);
    seed_cache.seed(static_cast<std::uint64_t>(block) << low);
    std::vector<BasicSubsetState<Real>> levels(low + 1, seed_cache.state());
    auto include = [&](const BasicSubsetState<Real>& from, BasicSubsetState<Real>& to, std::size_t bit) {
        const std::size_t row = bit * tables.diseases;
        to.subset = from.subset | (std::uint64_t{1} << bit);
        to.size = from.size + 1;
        to.leak = from.leak * tables.leak[bit];
        for (std::size_t j = 0; j < tables.diseases; ++j) {
            to.product[j] = from.product[j] * tables.lambda[row + j];
            to.tau_removed[j] = from.tau_removed[j] + tables.tau_step[row + j];
            to.gamma[j] = from.gamma[j] + tables.gamma_step[row + j];
        }
    };
    visit(levels[low]);
    for (std::uint64_t lo = 1; lo < span; ++lo) {
        // Counting lo-1 -> lo sets bit b and clears every bit below it.
        const auto b = static_cast<std::size_t>(std::countr_zero(lo));
        const std::size_t parent = low - b - 1;  // decided bits > b
        include(levels[parent], levels[parent + 1], b);
        for (std::size_t k = parent + 2; k <= low; ++k) levels[k] = levels[k - 1];
        visit(levels[low]);
    }
}

}  // namespace cfdx
