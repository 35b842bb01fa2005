#include "bellcirc/contracts.hpp"

#include <cmath>

namespace bellcirc {

ContractFn::ContractFn(FiniteSpace space, std::vector<Cost> values)
    : space_(std::move(space)), values_(std::move(values)) {
    if (static_cast<Eigen::Index>(values_.size()) != space_.size())
        throw Error("ContractFn over '" + space_.name() + "': length does not match space size");
}

ContractFn ContractFn::bottom(const FiniteSpace& space) {
    return ContractFn(space, std::vector<Cost>(static_cast<std::size_t>(space.size()), Cost(0.0)));
}

ContractFn ContractFn::constant(const FiniteSpace& space, Cost c) {
    return ContractFn(space, std::vector<Cost>(static_cast<std::size_t>(space.size()), c));
}

bool ContractFn::leq(const ContractFn& other, double slack, Eigen::Index* witness) const {
    if (space_ != other.space_) throw SpaceMismatch("ContractFn::leq: spaces differ");
    for (Eigen::Index i = 0; i < size(); ++i) {
        if (!leq_with_slack((*this)(i), other(i), slack)) {
            if (witness) *witness = i;
            return false;
        }
    }
    if (witness) *witness = -1;
    return true;
}

ContractTransformer::ContractTransformer(FiniteSpace in_space_, FiniteSpace out_space_, std::vector<Cost> cost_,
                                         double gamma_, Kernel trans_)
    : in_space(std::move(in_space_)),
      out_space(std::move(out_space_)),
      cost(std::move(cost_)),
      gamma(gamma_),
      trans(std::move(trans_)) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error("ContractTransformer: gamma must lie in (0,1)");
    if (static_cast<Eigen::Index>(cost.size()) != in_space.size())
        throw SpaceMismatch("ContractTransformer: cost length != input space size");
    if (trans.from() != in_space || trans.to() != out_space)
        throw SpaceMismatch("ContractTransformer: kernel spaces do not match declared type");
}

ContractFn apply_contract(const ContractTransformer& t, const ContractFn& c) {
    if (c.space() != t.out_space)
        throw SpaceMismatch("apply_contract: contract space '" + c.space().name() + "' != transformer output '" +
                            t.out_space.name() + "'");
    std::vector<Cost> out;
    out.reserve(static_cast<std::size_t>(t.in_space.size()));
    for (Eigen::Index x = 0; x < t.in_space.size(); ++x) {
        // Extended nonnegative integral: terms with zero mass contribute
        // nothing even at infinite contract entries.
        bool infinite = false;
        double acc = 0.0;
        for (Eigen::Index y = 0; y < t.out_space.size(); ++y) {
            const double w = t.trans(x, y);
            if (w == 0.0) continue;
            if (c(y).is_infinite()) {
                infinite = true;
                break;
            }
            acc += w * c(y).finite_value();
        }
        Cost expectation = infinite ? Cost::infinity() : Cost(acc);
        out.push_back(t.cost[static_cast<std::size_t>(x)] + scale(t.gamma, expectation));
    }
    return ContractFn(t.in_space, std::move(out));
}

LfpResult kleene_lfp(const ContractTransformer& t, double tol, int max_iter) {
    if (!t.closed()) throw TypeMismatch("kleene_lfp: open contract transformer");
    double max_finite_cost = 0.0;
    for (const Cost& c : t.cost)
        if (!c.is_infinite()) max_finite_cost = std::max(max_finite_cost, c.finite_value());
    // Provably above any finite lfp entry for a finite-cost contractive system.
    const double ceiling = 10.0 * max_finite_cost / (1.0 - t.gamma);
    const double stop = tol * (1.0 - t.gamma);

    ContractFn current = ContractFn::bottom(t.in_space);
    for (int iter = 1; iter <= max_iter; ++iter) {
        ContractFn next = apply_contract(t, current);
        // Declare divergent entries infinite once they pass the ceiling.
        bool promoted = false;
        std::vector<Cost> vals = next.values();
        for (Cost& v : vals) {
            if (!v.is_infinite() && v.finite_value() > ceiling) {
                v = Cost::infinity();
                promoted = true;
            }
        }
        if (promoted) next = ContractFn(t.in_space, std::move(vals));
        Eigen::Index witness = -1;
        if (!current.leq(next, kStochasticTol, &witness))
            throw Error("kleene_lfp: chain decreased at state '" + t.in_space.label(witness) + "' (iteration " +
                        std::to_string(iter) + ")");
        bool settled = true;
        for (Eigen::Index i = 0; i < next.size(); ++i) {
            const Cost g = gap(current(i), next(i));
            if (g.is_infinite() || g.finite_value() > stop) {
                settled = false;
                break;
            }
        }
        current = std::move(next);
        if (settled) return {current, iter};
    }
    throw MaxIterExceeded("kleene_lfp: chain did not settle within " + std::to_string(max_iter) + " iterations");
}

PrefixedCheck check_prefixed(const ContractTransformer& t, const ContractFn& c, double tol) {
    const ContractFn applied = apply_contract(t, c);
    Eigen::Index witness = -1;
    if (!applied.leq(c, kStochasticTol, &witness)) return {false, witness};
    // Soundness: a pre-fixed point dominates the least fixed point.
    const ContractFn lfp = kleene_lfp(t, tol).value;
    Eigen::Index lfp_witness = -1;
    if (!lfp.leq(c, kRenormLimit, &lfp_witness))
        throw Error("check_prefixed: least fixed point exceeds the verified pre-fixed point at state '" +
                    t.in_space.label(lfp_witness) + "'");
    return {true, -1};
}

namespace {

// Series composition of additive contract transformers: the second cost and
// continuation sit one discount factor deeper.
ContractTransformer compose_contract(const ContractTransformer& t1, const ContractTransformer& t2) {
    if (t1.out_space != t2.in_space) throw SpaceMismatch("compose_contract: interface mismatch");
    std::vector<Cost> cost;
    cost.reserve(static_cast<std::size_t>(t1.in_space.size()));
    const ContractFn c2(t2.in_space, t2.cost);
    // c1 + gamma1 * K1 c2 via the transformer itself with zero base cost.
    ContractTransformer lift(t1.in_space, t1.out_space,
                             std::vector<Cost>(static_cast<std::size_t>(t1.in_space.size()), Cost(0.0)), t1.gamma,
                             t1.trans);
    const ContractFn pushed = apply_contract(lift, c2);
    for (Eigen::Index x = 0; x < t1.in_space.size(); ++x)
        cost.push_back(t1.cost[static_cast<std::size_t>(x)] + pushed(x));
    return ContractTransformer(t1.in_space, t2.out_space, std::move(cost), t1.gamma * t2.gamma,
                               compose_kernels(t1.trans, t2.trans));
}

bool same_contract(const ContractFn& a, const ContractFn& b) {
    if (a.space() != b.space()) return false;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (a(i).is_infinite() != b(i).is_infinite()) return false;
        if (!a(i).is_infinite() && a(i).finite_value() != b(i).finite_value()) return false;
    }
    return true;
}

}  // namespace

LiftVerdict lift_series(const ContractTransformer& t1, const ContractTransformer& t2, const ContractFn& cz,
                        const ContractFn& cy, const ContractFn& cx) {
    Eigen::Index witness = -1;
    const ContractFn t2cz = apply_contract(t2, cz);
    if (!t2cz.leq(cy, kStochasticTol, &witness))
        return {false, "T2(C_Z) <= C_Y fails at state '" + t2.in_space.label(witness) + "'"};
    const ContractFn t1cy = apply_contract(t1, cy);
    if (!t1cy.leq(cx, kStochasticTol, &witness))
        return {false, "T1(C_Y) <= C_X fails at state '" + t1.in_space.label(witness) + "'"};
    // Composed guarantee follows by monotonicity; verify it outright.
    const ContractFn composed = apply_contract(t1, t2cz);
    if (!composed.leq(cx, kStochasticTol, &witness))
        throw Error("lift_series: composed guarantee failed despite local obligations (state '" +
                    t1.in_space.label(witness) + "')");
    std::string detail = "series obligations hold";
    if (t1.in_space == t2.out_space && same_contract(cx, cz)) {
        const ContractTransformer macro = compose_contract(t1, t2);
        const PrefixedCheck closed = check_prefixed(macro, cx);
        if (!closed.holds)
            throw Error("lift_series: inductive closed-loop contract failed at state '" +
                        t1.in_space.label(closed.witness) + "'");
        detail += "; closed-loop lfp bounded by C";
    }
    return {true, detail};
}

ContractTransformer tensor_contract(const ContractTransformer& t1, const ContractTransformer& t2) {
    if (t1.gamma != t2.gamma) throw TypeMismatch("tensor_contract: parallel wiring requires a common discount");
    const FiniteSpace in = product(t1.in_space, t2.in_space);
    std::vector<Cost> cost;
    cost.reserve(static_cast<std::size_t>(in.size()));
    for (Eigen::Index i = 0; i < t1.in_space.size(); ++i)
        for (Eigen::Index j = 0; j < t2.in_space.size(); ++j)
            cost.push_back(t1.cost[static_cast<std::size_t>(i)] + t2.cost[static_cast<std::size_t>(j)]);
    return ContractTransformer(in, product(t1.out_space, t2.out_space), std::move(cost), t1.gamma,
                               tensor_kernels(t1.trans, t2.trans));
}

ContractFn tensor_contract_fn(const ContractFn& c1, const ContractFn& c2) {
    const FiniteSpace sp = product(c1.space(), c2.space());
    std::vector<Cost> vals;
    vals.reserve(static_cast<std::size_t>(sp.size()));
    for (Eigen::Index i = 0; i < c1.size(); ++i)
        for (Eigen::Index j = 0; j < c2.size(); ++j) vals.push_back(c1(i) + c2(j));
    return ContractFn(sp, std::move(vals));
}

LiftVerdict lift_parallel(const ContractTransformer& t1, const ContractTransformer& t2, const ContractFn& cy1,
                          const ContractFn& cx1, const ContractFn& cy2, const ContractFn& cx2) {
    Eigen::Index witness = -1;
    if (!apply_contract(t1, cy1).leq(cx1, kStochasticTol, &witness))
        return {false, "left obligation fails at state '" + t1.in_space.label(witness) + "'"};
    if (!apply_contract(t2, cy2).leq(cx2, kStochasticTol, &witness))
        return {false, "right obligation fails at state '" + t2.in_space.label(witness) + "'"};
    const ContractFn tensored = apply_contract(tensor_contract(t1, t2), tensor_contract_fn(cy1, cy2));
    const ContractFn bound = tensor_contract_fn(cx1, cx2);
    if (!tensored.leq(bound, kRenormLimit, &witness))
        throw Error("lift_parallel: tensored guarantee failed despite per-side obligations (index " +
                    std::to_string(witness) + ")");
    return {true, "parallel obligations hold; tensored guarantee verified"};
}

LfpTraceResult lfp_trace(const ContractMap& f_x, const ContractMap& f_z, const ContractFn& cy, const ContractFn& cx,
                         const ContractFn& cz, double tol, int max_iter) {
    // Kleene iteration of the feedback component at the fixed post-contract.
    // The chain itself is the monotonicity spot check: a decrease anywhere
    // falsifies monotonicity of f_z.
    ContractFn z = ContractFn::bottom(cz.space());
    int iter = 0;
    while (true) {
        ContractFn next = f_z(cy, z);
        ++iter;
        Eigen::Index witness = -1;
        if (!z.leq(next, kStochasticTol, &witness))
            throw ObligationFailed("lfp_trace: feedback chain decreased at state '" + cz.space().label(witness) +
                                   "'; feedback map is not monotone");
        bool settled = true;
        for (Eigen::Index i = 0; i < next.size(); ++i) {
            const Cost g = gap(z(i), next(i));
            if (g.is_infinite() || g.finite_value() > tol) {
                settled = false;
                break;
            }
        }
        z = std::move(next);
        if (settled) break;
        if (iter >= max_iter) throw MaxIterExceeded("lfp_trace: feedback chain did not settle");
    }

    LfpTraceResult result{true, "", z, f_x(cy, z)};
    Eigen::Index witness = -1;
    if (!f_z(cy, cz).leq(cz, kStochasticTol, &witness)) {
        result.holds = false;
        result.detail = "F_Z(C_Y, C_Z) <= C_Z fails at state '" + cz.space().label(witness) + "'";
        return result;
    }
    if (!f_x(cy, cz).leq(cx, kStochasticTol, &witness)) {
        result.holds = false;
        result.detail = "F_X(C_Y, C_Z) <= C_X fails at state '" + cx.space().label(witness) + "'";
        return result;
    }
    if (!result.traced_output.leq(cx, kRenormLimit, &witness))
        throw Error("lfp_trace: traced output exceeds C_X despite obligations (state '" + cx.space().label(witness) +
                    "')");
    result.detail = "feedback obligations hold; traced output bounded by C_X";
    return result;
}

}  // namespace bellcirc
