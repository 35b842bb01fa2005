#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "bellcirc/core.hpp"

namespace bellcirc {

// An element of [0, +infinity] with total ordered arithmetic. Infinity is a
// dedicated sentinel, not a floating-point inf, so it cannot leak into the
// Banach-layer numerics. Scaling follows the extended nonnegative integral:
// 0 * inf = 0, c * inf = inf for c > 0.
class Cost {
public:
    Cost() : value_(0.0), infinite_(false) {}
    Cost(double v) : value_(v), infinite_(false) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error("Cost: value must be finite and >= 0");
    }
    static Cost infinity() {
        Cost c;
        c.infinite_ = true;
        return c;
    }

    bool is_infinite() const { return infinite_; }
    double finite_value() const {
        if (infinite_) throw Error("Cost: infinite value has no finite representation");
        return value_;
    }

    friend Cost operator+(const Cost& a, const Cost& b) {
        if (a.infinite_ || b.infinite_) return infinity();
        return Cost(a.value_ + b.value_);
    }
    // Nonnegative scaling with the 0 * inf = 0 convention.
    friend Cost scale(double c, const Cost& q) {
        if (c < 0.0) throw Error("Cost: negative scale");
        if (c == 0.0) return Cost(0.0);
        if (q.infinite_) return infinity();
        return Cost(c * q.value_);
    }
    friend bool operator<=(const Cost& a, const Cost& b) {
        if (b.infinite_) return true;
        if (a.infinite_) return false;
        return a.value_ <= b.value_;
    }
    friend bool leq_with_slack(const Cost& a, const Cost& b, double slack) {
        if (b.infinite_) return true;
        if (a.infinite_) return false;
        return a.value_ <= b.value_ + slack;
    }
    friend Cost max(const Cost& a, const Cost& b) { return a <= b ? b : a; }
    // Absolute gap between two costs; infinity only when exactly one side is infinite.
    friend Cost gap(const Cost& a, const Cost& b) {
        if (a.infinite_ && b.infinite_) return Cost(0.0);
        if (a.infinite_ || b.infinite_) return infinity();
        return Cost(std::abs(a.value_ - b.value_));
    }

private:
    double value_;
    bool infinite_;
};

// A [0, inf]-valued function over states, ordered pointwise.
class ContractFn {
public:
    ContractFn(FiniteSpace space, std::vector<Cost> values);

    const FiniteSpace& space() const { return space_; }
    const std::vector<Cost>& values() const { return values_; }
    const Cost& operator()(Eigen::Index i) const { return values_[static_cast<std::size_t>(i)]; }
    Eigen::Index size() const { return static_cast<Eigen::Index>(values_.size()); }

    static ContractFn bottom(const FiniteSpace& space);
    static ContractFn constant(const FiniteSpace& space, Cost c);

    // Pointwise order with numeric slack on finite entries; on failure,
    // *witness (if given) receives the first violating state.
    bool leq(const ContractFn& other, double slack = kStochasticTol, Eigen::Index* witness = nullptr) const;

private:
    FiniteSpace space_;
    std::vector<Cost> values_;
};

// The concrete additive contract transformer
//   (T C)(x) = cost(x) + gamma * sum_y K(y|x) C(y)
// on the quantale [0, inf] with pointwise order; monotone and
// omega-continuous by construction.
struct ContractTransformer {
    ContractTransformer(FiniteSpace in_space_, FiniteSpace out_space_, std::vector<Cost> cost_, double gamma_,
                        Kernel trans_);

    FiniteSpace in_space;
    FiniteSpace out_space;
    std::vector<Cost> cost;
    double gamma;
    Kernel trans;

    bool closed() const { return in_space == out_space; }
};

ContractFn apply_contract(const ContractTransformer& t, const ContractFn& c);

struct LfpResult {
    ContractFn value;
    int iterations;
};

// Kleene iteration from bottom. The chain must increase monotonically at
// every step; finite entries settle when the increment drops below
// tol * (1 - gamma), entries beyond the divergence ceiling are declared
// infinite.
LfpResult kleene_lfp(const ContractTransformer& t, double tol = 1e-10, int max_iter = 1000000);

struct PrefixedCheck {
    bool holds;
    Eigen::Index witness;  // violating state when holds is false, -1 otherwise
};

// True iff T(c) <= c pointwise. When true, also asserts lfp(T) <= c.
PrefixedCheck check_prefixed(const ContractTransformer& t, const ContractFn& c, double tol = 1e-10);

struct LiftVerdict {
    bool holds;
    std::string detail;  // names the broken inequality and a witness state
};

// Series / assume-guarantee: checks T2(Cz) <= Cy and T1(Cy) <= Cx, then the
// composed guarantee, and when the macro loop closes (X == Z, Cx == Cz) also
// the closed-loop least-fixed-point bound.
LiftVerdict lift_series(const ContractTransformer& t1, const ContractTransformer& t2, const ContractFn& cz,
                        const ContractFn& cy, const ContractFn& cx);

// Parallel / separable product contracts: per-side obligations plus the
// tensored transformer on the pointwise-sum contract.
LiftVerdict lift_parallel(const ContractTransformer& t1, const ContractTransformer& t2, const ContractFn& cy1,
                          const ContractFn& cx1, const ContractFn& cy2, const ContractFn& cx2);

// Tensor of two additive contract transformers (product kernel, summed costs).
ContractTransformer tensor_contract(const ContractTransformer& t1, const ContractTransformer& t2);

// Separable product contract (pointwise sum on the product space).
ContractFn tensor_contract_fn(const ContractFn& c1, const ContractFn& c2);

// Monotone parameterized contract map on the feedback pair (C_Y, C_Z).
using ContractMap = std::function<ContractFn(const ContractFn& cy, const ContractFn& cz)>;

struct LfpTraceResult {
    bool holds;
    std::string detail;
    ContractFn traced_feedback;  // Z* = lfp of z -> f_z(C_Y, z)
    ContractFn traced_output;    // F_X(C_Y, Z*)
};

// Feedback / trace: computes the least fixed point of the feedback
// component at the given post-contract and checks the traced obligations.
LfpTraceResult lfp_trace(const ContractMap& f_x, const ContractMap& f_z, const ContractFn& cy, const ContractFn& cx,
                         const ContractFn& cz, double tol = 1e-10, int max_iter = 100000);

}  // namespace bellcirc
