#pragma once

#include "bellcirc/circuit.hpp"

namespace bellcirc {

// A surjective state abstraction phi : S -> S_hat given as an index array,
// optionally with an action relabeling eta : A -> A.
struct AbstractionMap {
    AbstractionMap(FiniteSpace concrete_, FiniteSpace abstract_space, std::vector<Eigen::Index> phi_,
                   std::optional<std::vector<Eigen::Index>> eta_ = std::nullopt);

    FiniteSpace concrete;
    FiniteSpace abstract_;
    std::vector<Eigen::Index> phi;
    std::optional<std::vector<Eigen::Index>> eta;

    Eigen::Index operator()(Eigen::Index s) const { return phi[static_cast<std::size_t>(s)]; }
    // The 0/1 pullback matrix: row s selects column phi(s).
    Eigen::MatrixXd pullback_matrix() const;
};

// Mass summed over fibers: (phi_# mu)(b) = sum_{s : phi(s)=b} mu(s).
Dist pushforward(const AbstractionMap& phi, const Dist& mu);

// (phi^* vhat)(s) = vhat(phi(s)). Never expands the sup norm.
ValueFn pullback_value(const AbstractionMap& phi, const ValueFn& vhat);

// eps_r = sup_{s,a} |r(s,a) - rhat(phi(s), eta(a))| and
// eps_P = sup_{s,a} d_TV(phi_# P(.|s,a), Phat(.|phi(s), eta(a))).
struct Mismatch {
    double eps_r;
    double eps_P;
};
Mismatch measure_mismatch(const Mdp& concrete, const Mdp& abstract_mdp, const AbstractionMap& phi);

// Result of a homomorphism audit: the measured mismatch, the certified
// value-distortion bound (eps_r + gamma V_max eps_P) / (1 - gamma), and the
// measured sup-norm gap between the lifted abstract value and the concrete one.
struct HomReport {
    double eps_r = 0.0;
    double eps_P = 0.0;
    bool exact = false;
    double bound = 0.0;
    double measured_gap = 0.0;
    double intertwining_residual = 0.0;
};

// Lifted concrete policy pi(a|s) = pihat(a|phi(s)).
Policy lift_policy(const AbstractionMap& phi, const Mdp& concrete, const Policy& pihat);

// Exact-homomorphism verification: requires zero mismatch, then checks the
// operator intertwining on random abstract values and the value equality
// V^pi = phi^* Vhat^pihat through two linear solves.
HomReport verify_exact_hom(const Mdp& concrete, const Mdp& abstract_mdp, const AbstractionMap& phi,
                           const Policy& pihat, std::uint64_t seed = 0x1234);

// Optimality variant: checks T*(phi^* Vhat) = phi^*(That* Vhat) on random
// values and V* = phi^* Vhat*.
HomReport verify_exact_hom_optimal(const Mdp& concrete, const Mdp& abstract_mdp, const AbstractionMap& phi,
                                   std::uint64_t seed = 0x1234);

// Approximate-homomorphism audit; requires a common declared reward bound.
HomReport verify_approx_hom(const Mdp& concrete, const Mdp& abstract_mdp, const AbstractionMap& phi,
                            const Policy& pihat);

// The two adapter-level transformers with common type B(S_hat) -> B(S):
// concrete backup after pullback, and pullback after abstract backup. Both
// are affine with stochastic transition parts, so they are plain Transformers.
Transformer adapt_concrete(const Mdp& concrete, const Policy& pihat, const AbstractionMap& phi);
Transformer adapt_abstract(const Mdp& abstract_mdp, const Policy& pihat, const AbstractionMap& phi);

// Exact sup over the radius ball of || T(phi^* Vhat) - phi^*(That Vhat) ||.
// Also checks it against the one-step defect bound eps_r + gamma V_max eps_P.
double adapter_defect(const Mdp& concrete, const Mdp& abstract_mdp, const AbstractionMap& phi, const Policy& pihat,
                      double radius);

// Direct closure of an adapter-typed block through a section of phi (one
// representative concrete state per abstract state): an endo transformer on
// the abstract space. Closing the adapted abstract block this way recovers
// the abstract model's own backup, so the trivial-context bound reduces to
// the plain distortion bound.
Transformer close_adapter_with_section(const Transformer& adapter, const AbstractionMap& phi,
                                       const std::vector<Eigen::Index>& section);

struct ContextReport {
    double defect;    // adapter-level operator discrepancy
    double gain;      // L(C)
    double modulus;   // kappa(C)
    double bound;     // L/(1-kappa) * defect
    double measured;  // contextual fixed-point gap
};

// Plugs the adapted concrete and abstract blocks into an adapter-typed
// one-hole context and checks the propagated abstraction bound.
ContextReport abstraction_in_context(const CircuitExpr& context, const Mdp& concrete, const Mdp& abstract_mdp,
                                     const AbstractionMap& phi, const Policy& pihat);

// Treats (phi, eta) as a self-homomorphism with action relabeling and runs
// the approximate-abstraction machinery against the relabeled model.
HomReport verify_symmetry(const Mdp& m, const std::vector<Eigen::Index>& phi, const std::vector<Eigen::Index>& eta,
                          const Policy& pihat);

}  // namespace bellcirc
