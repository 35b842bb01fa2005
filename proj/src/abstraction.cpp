#include "bellcirc/abstraction.hpp"

#include <cmath>

#include "bellcirc/rng.hpp"

namespace bellcirc {

namespace {

// Index of action a after relabeling, identity when eta is absent.
Eigen::Index relabel(const AbstractionMap& phi, Eigen::Index a) {
    return phi.eta ? (*phi.eta)[static_cast<std::size_t>(a)] : a;
}

void check_shared_shape(const Mdp& concrete, const Mdp& abstract_mdp, const AbstractionMap& phi) {
    if (phi.concrete != concrete.states || phi.abstract_ != abstract_mdp.states)
        throw SpaceMismatch("abstraction: map spaces do not match the models");
    if (concrete.actions.size() != abstract_mdp.actions.size())
        throw SpaceMismatch("abstraction: models must share the action space");
    if (concrete.gamma != abstract_mdp.gamma) throw TypeMismatch("abstraction: models must share the discount");
    if (phi.eta) {
        if (static_cast<Eigen::Index>(phi.eta->size()) != concrete.actions.size())
            throw SpaceMismatch("abstraction: eta must be total on the action space");
        for (Eigen::Index a : *phi.eta)
            if (a < 0 || a >= concrete.actions.size()) throw SpaceMismatch("abstraction: eta image out of range");
    }
}

// Common reward bound of the two models. Explicit declarations must agree;
// otherwise the larger table bound serves as the shared bound.
double common_r_max(const Mdp& concrete, const Mdp& abstract_mdp) {
    if (concrete.r_max_declared && abstract_mdp.r_max_declared) {
        if (concrete.r_max != abstract_mdp.r_max)
            throw TypeMismatch("abstraction: models declare different reward bounds");
        return concrete.r_max;
    }
    return std::max(concrete.r_max, abstract_mdp.r_max);
}

}  // namespace

AbstractionMap::AbstractionMap(FiniteSpace concrete_, FiniteSpace abstract_space, std::vector<Eigen::Index> phi_,
                               std::optional<std::vector<Eigen::Index>> eta_)
    : concrete(std::move(concrete_)), abstract_(std::move(abstract_space)), phi(std::move(phi_)), eta(std::move(eta_)) {
    if (static_cast<Eigen::Index>(phi.size()) != concrete.size())
        throw SpaceMismatch("AbstractionMap: phi must be total on the concrete space");
    std::vector<bool> hit(static_cast<std::size_t>(abstract_.size()), false);
    for (Eigen::Index b : phi) {
        if (b < 0 || b >= abstract_.size()) throw SpaceMismatch("AbstractionMap: phi image out of range");
        hit[static_cast<std::size_t>(b)] = true;
    }
    for (std::size_t b = 0; b < hit.size(); ++b)
        if (!hit[b])
            throw Error("AbstractionMap: phi is not surjective ('" + abstract_.label(static_cast<Eigen::Index>(b)) +
                        "' is never hit)");
}

Eigen::MatrixXd AbstractionMap::pullback_matrix() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(concrete.size(), abstract_.size());
    for (Eigen::Index s = 0; s < concrete.size(); ++s) m(s, phi[static_cast<std::size_t>(s)]) = 1.0;
    return m;
}

Dist pushforward(const AbstractionMap& phi, const Dist& mu) {
    if (mu.space() != phi.concrete) throw SpaceMismatch("pushforward: distribution space does not match phi");
    Eigen::VectorXd p = Eigen::VectorXd::Zero(phi.abstract_.size());
    for (Eigen::Index s = 0; s < mu.size(); ++s) p(phi(s)) += mu(s);
    return Dist(phi.abstract_, std::move(p));
}

ValueFn pullback_value(const AbstractionMap& phi, const ValueFn& vhat) {
    if (vhat.space() != phi.abstract_) throw SpaceMismatch("pullback_value: value space does not match phi");
    Eigen::VectorXd v(phi.concrete.size());
    for (Eigen::Index s = 0; s < phi.concrete.size(); ++s) v(s) = vhat(phi(s));
    return ValueFn(phi.concrete, std::move(v), vhat.radius());
}

Mismatch measure_mismatch(const Mdp& concrete, const Mdp& abstract_mdp, const AbstractionMap& phi) {
    check_shared_shape(concrete, abstract_mdp, phi);
    const Eigen::Index na = concrete.actions.size();
    double eps_r = 0.0;
    double eps_P = 0.0;
    for (Eigen::Index s = 0; s < concrete.states.size(); ++s) {
        for (Eigen::Index a = 0; a < na; ++a) {
            const Eigen::Index ahat = relabel(phi, a);
            eps_r = std::max(eps_r, std::abs(concrete.reward(s, a) - abstract_mdp.reward(phi(s), ahat)));
            const Dist pushed = pushforward(phi, Dist(concrete.states, concrete.next_state_probs(s, a)));
            const Dist target(abstract_mdp.states, abstract_mdp.next_state_probs(phi(s), ahat));
            eps_P = std::max(eps_P, tv_distance(pushed, target));
        }
    }
    return {eps_r, eps_P};
}

Policy lift_policy(const AbstractionMap& phi, const Mdp& concrete, const Policy& pihat) {
    if (pihat.state_space != phi.abstract_) throw SpaceMismatch("lift_policy: policy lives on the wrong space");
    const Eigen::Index na = concrete.actions.size();
    if (pihat.action_space.size() != na) throw SpaceMismatch("lift_policy: action spaces differ");
    Eigen::MatrixXd rows(concrete.states.size(), na);
    if (phi.eta) {
        // pi(a|s) = pihat(eta(a)|phi(s)); eta must be a bijection for this
        // to remain a distribution over actions.
        std::vector<bool> hit(static_cast<std::size_t>(na), false);
        for (Eigen::Index a : *phi.eta) hit[static_cast<std::size_t>(a)] = true;
        for (bool h : hit)
            if (!h) throw Error("lift_policy: action relabeling must be a bijection");
        for (Eigen::Index s = 0; s < concrete.states.size(); ++s)
            for (Eigen::Index a = 0; a < na; ++a) rows(s, a) = pihat.kernel(phi(s), relabel(phi, a));
    } else {
        for (Eigen::Index s = 0; s < concrete.states.size(); ++s)
            for (Eigen::Index a = 0; a < na; ++a) rows(s, a) = pihat.kernel(phi(s), a);
    }
    return Policy(concrete.states, concrete.actions, std::move(rows));
}

HomReport verify_exact_hom(const Mdp& concrete, const Mdp& abstract_mdp, const AbstractionMap& phi,
                           const Policy& pihat, std::uint64_t seed) {
    const Mismatch mm = measure_mismatch(concrete, abstract_mdp, phi);
    if (mm.eps_r > kStochasticTol || mm.eps_P > kStochasticTol)
        throw NotExact("verify_exact_hom: mismatch (" + std::to_string(mm.eps_r) + ", " + std::to_string(mm.eps_P) +
                       ") is nonzero");
    const Policy lifted = lift_policy(phi, concrete, pihat);
    const Transformer t_conc = policy_transformer(concrete, lifted);
    const Transformer t_abs = policy_transformer(abstract_mdp, pihat);
    const double v_max = common_r_max(concrete, abstract_mdp) / (1.0 - concrete.gamma);

    HomReport report;
    report.eps_r = mm.eps_r;
    report.eps_P = mm.eps_P;
    report.exact = true;
    report.bound = (mm.eps_r + concrete.gamma * v_max * mm.eps_P) / (1.0 - concrete.gamma);

    Rng rng(seed);
    for (int k = 0; k < 100; ++k) {
        Eigen::VectorXd vhat(abstract_mdp.states.size());
        for (Eigen::Index i = 0; i < vhat.size(); ++i) vhat(i) = rng.uniform(-v_max, v_max);
        const ValueFn vh(abstract_mdp.states, vhat);
        const ValueFn lhs = apply(t_conc, pullback_value(phi, vh));
        const ValueFn rhs = pullback_value(phi, apply(t_abs, vh));
        report.intertwining_residual = std::max(report.intertwining_residual, sup_norm_diff(lhs, rhs));
    }
    report.measured_gap = sup_norm_diff(solve_linear(t_conc), pullback_value(phi, solve_linear(t_abs)));
    return report;
}

HomReport verify_exact_hom_optimal(const Mdp& concrete, const Mdp& abstract_mdp, const AbstractionMap& phi,
                                   std::uint64_t seed) {
    const Mismatch mm = measure_mismatch(concrete, abstract_mdp, phi);
    if (mm.eps_r > kStochasticTol || mm.eps_P > kStochasticTol)
        throw NotExact("verify_exact_hom_optimal: mismatch is nonzero");
    const OptimalityOperator opt_conc(concrete);
    const OptimalityOperator opt_abs(abstract_mdp);
    const double v_max = common_r_max(concrete, abstract_mdp) / (1.0 - concrete.gamma);

    HomReport report;
    report.eps_r = mm.eps_r;
    report.eps_P = mm.eps_P;
    report.exact = true;
    report.bound = (mm.eps_r + concrete.gamma * v_max * mm.eps_P) / (1.0 - concrete.gamma);

    Rng rng(seed);
    for (int k = 0; k < 100; ++k) {
        Eigen::VectorXd vhat(abstract_mdp.states.size());
        for (Eigen::Index i = 0; i < vhat.size(); ++i) vhat(i) = rng.uniform(-v_max, v_max);
        const ValueFn vh(abstract_mdp.states, vhat);
        const ValueFn lhs = opt_conc.apply(pullback_value(phi, vh));
        const ValueFn rhs = pullback_value(phi, opt_abs.apply(vh));
        report.intertwining_residual = std::max(report.intertwining_residual, sup_norm_diff(lhs, rhs));
    }
    const ValueFn vstar_conc = opt_conc.solve(1e-11).first.value;
    const ValueFn vstar_abs = opt_abs.solve(1e-11).first.value;
    report.measured_gap = sup_norm_diff(vstar_conc, pullback_value(phi, vstar_abs));
    return report;
}

HomReport verify_approx_hom(const Mdp& concrete, const Mdp& abstract_mdp, const AbstractionMap& phi,
                            const Policy& pihat) {
    const Mismatch mm = measure_mismatch(concrete, abstract_mdp, phi);
    const double gamma = concrete.gamma;
    const double v_max = common_r_max(concrete, abstract_mdp) / (1.0 - gamma);
    const Policy lifted = lift_policy(phi, concrete, pihat);

    HomReport report;
    report.eps_r = mm.eps_r;
    report.eps_P = mm.eps_P;
    report.exact = mm.eps_r <= kStochasticTol && mm.eps_P <= kStochasticTol;
    report.bound = (mm.eps_r + gamma * v_max * mm.eps_P) / (1.0 - gamma);
    report.measured_gap = sup_norm_diff(solve_linear(policy_transformer(concrete, lifted)),
                                        pullback_value(phi, solve_linear(policy_transformer(abstract_mdp, pihat))));
    if (report.measured_gap > report.bound + kRenormLimit)
        throw Error("verify_approx_hom: measured gap " + std::to_string(report.measured_gap) +
                    " exceeds certified bound " + std::to_string(report.bound));
    return report;
}

Transformer adapt_concrete(const Mdp& concrete, const Policy& pihat, const AbstractionMap& phi) {
    const Transformer t = policy_transformer(concrete, lift_policy(phi, concrete, pihat));
    const double ball = concrete.v_max();
    return Transformer(concrete.states, phi.abstract_, t.reward, t.gamma,
                       Kernel(concrete.states, phi.abstract_, t.trans.rows() * phi.pullback_matrix()), ball, ball);
}

Transformer adapt_abstract(const Mdp& abstract_mdp, const Policy& pihat, const AbstractionMap& phi) {
    const Transformer t = policy_transformer(abstract_mdp, pihat);
    const Eigen::MatrixXd pull = phi.pullback_matrix();
    const double ball = abstract_mdp.v_max();
    return Transformer(phi.concrete, phi.abstract_, ValueFn(phi.concrete, pull * t.reward.values()), t.gamma,
                       Kernel(phi.concrete, phi.abstract_, pull * t.trans.rows()), ball, ball);
}

double adapter_defect(const Mdp& concrete, const Mdp& abstract_mdp, const AbstractionMap& phi, const Policy& pihat,
                      double radius) {
    const Mismatch mm = measure_mismatch(concrete, abstract_mdp, phi);
    const double defect = operator_distance(adapt_concrete(concrete, pihat, phi),
                                            adapt_abstract(abstract_mdp, pihat, phi), radius);
    const double gamma = concrete.gamma;
    const double one_step = mm.eps_r + gamma * radius * mm.eps_P;
    if (defect > one_step + kRenormLimit)
        throw Error("adapter_defect: exact defect " + std::to_string(defect) + " exceeds the one-step bound " +
                    std::to_string(one_step));
    return defect;
}

Transformer close_adapter_with_section(const Transformer& adapter, const AbstractionMap& phi,
                                       const std::vector<Eigen::Index>& section) {
    if (adapter.in_space != phi.concrete || adapter.out_space != phi.abstract_)
        throw SpaceMismatch("close_adapter_with_section: transformer does not have the adapter type");
    if (static_cast<Eigen::Index>(section.size()) != phi.abstract_.size())
        throw SpaceMismatch("close_adapter_with_section: section must be total on the abstract space");
    Eigen::VectorXd reward(phi.abstract_.size());
    Eigen::MatrixXd rows(phi.abstract_.size(), phi.abstract_.size());
    for (Eigen::Index b = 0; b < phi.abstract_.size(); ++b) {
        const Eigen::Index s = section[static_cast<std::size_t>(b)];
        if (s < 0 || s >= phi.concrete.size() || phi(s) != b)
            throw SpaceMismatch("close_adapter_with_section: section is not a right inverse of phi");
        reward(b) = adapter.reward(s);
        rows.row(b) = adapter.trans.rows().row(s);
    }
    return Transformer(phi.abstract_, phi.abstract_, ValueFn(phi.abstract_, std::move(reward)), adapter.gamma,
                       Kernel(phi.abstract_, phi.abstract_, std::move(rows)), adapter.ball_in, adapter.ball_out);
}

ContextReport abstraction_in_context(const CircuitExpr& context, const Mdp& concrete, const Mdp& abstract_mdp,
                                     const AbstractionMap& phi, const Policy& pihat) {
    const double v_max = common_r_max(concrete, abstract_mdp) / (1.0 - concrete.gamma);
    Transformer a_conc = adapt_concrete(concrete, pihat, phi);
    Transformer a_abs = adapt_abstract(abstract_mdp, pihat, phi);
    // Retag both adapters with the common hole ball so they are interchangeable.
    a_conc = Transformer(a_conc.in_space, a_conc.out_space, a_conc.reward, a_conc.gamma, a_conc.trans, v_max, v_max);
    a_abs = Transformer(a_abs.in_space, a_abs.out_space, a_abs.reward, a_abs.gamma, a_abs.trans, v_max, v_max);
    const double defect = operator_distance(a_conc, a_abs, v_max);
    const CongruenceReport r = congruence_bound(context, a_conc, a_abs, defect);
    return ContextReport{r.eps, r.gain, r.modulus, r.bound, r.measured};
}

HomReport verify_symmetry(const Mdp& m, const std::vector<Eigen::Index>& phi, const std::vector<Eigen::Index>& eta,
                          const Policy& pihat) {
    const AbstractionMap map(m.states, m.states, phi, eta);
    return verify_approx_hom(m, m, map, pihat);
}

}  // namespace bellcirc
