#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bellcirc/abstraction.hpp"
#include "bellcirc/generators.hpp"
#include "oracles.hpp"

using namespace bellcirc;

namespace {

// Block-structured MDP that lumps exactly onto its quotient: transitions
// and rewards depend only on the block of the state.
struct LumpablePair {
    Mdp concrete;
    Mdp abstract_mdp;
    AbstractionMap phi;
};

LumpablePair make_lumpable(Eigen::Index n_blocks, Eigen::Index per_block, Eigen::Index n_actions, double gamma,
                           std::uint64_t seed) {
    Rng rng(seed);
    const Eigen::Index ns = n_blocks * per_block;
    const FiniteSpace states = make_space("S", ns);
    const FiniteSpace actions = make_space("A", n_actions);
    const FiniteSpace blocks = make_space("B", n_blocks);

    // Abstract model first.
    Eigen::MatrixXd abs_trans(n_blocks * n_actions, n_blocks);
    for (Eigen::Index i = 0; i < abs_trans.rows(); ++i)
        abs_trans.row(i) = random_stochastic_row(rng, n_blocks).transpose();
    Eigen::MatrixXd abs_reward(n_blocks, n_actions);
    for (Eigen::Index b = 0; b < n_blocks; ++b)
        for (Eigen::Index a = 0; a < n_actions; ++a) abs_reward(b, a) = rng.uniform(-1.0, 1.0);

    // Concrete model: block-to-block mass split arbitrarily inside the
    // target block (pushforward recovers the abstract row exactly).
    Eigen::MatrixXd trans = Eigen::MatrixXd::Zero(ns * n_actions, ns);
    Eigen::MatrixXd reward(ns, n_actions);
    std::vector<Eigen::Index> phi_map(static_cast<std::size_t>(ns));
    for (Eigen::Index s = 0; s < ns; ++s) {
        const Eigen::Index block = s / per_block;
        phi_map[static_cast<std::size_t>(s)] = block;
        for (Eigen::Index a = 0; a < n_actions; ++a) {
            reward(s, a) = abs_reward(block, a);
            for (Eigen::Index bp = 0; bp < n_blocks; ++bp) {
                const Eigen::VectorXd split = random_stochastic_row(rng, per_block);
                for (Eigen::Index j = 0; j < per_block; ++j)
                    trans(s * n_actions + a, bp * per_block + j) =
                        abs_trans(block * n_actions + a, bp) * split(j);
            }
        }
    }
    return LumpablePair{
        Mdp(states, actions, Kernel(product(states, actions), states, trans), reward, gamma),
        Mdp(blocks, actions, Kernel(product(blocks, actions), blocks, abs_trans), abs_reward, gamma),
        AbstractionMap(states, blocks, phi_map)};
}

}  // namespace

TEST_CASE("pushforward") {
    const FiniteSpace s = make_space("S", 4), b = make_space("B", 2);
    const AbstractionMap identity(s, s, {0, 1, 2, 3});
    const Dist mu = random_dist(s, 601);
    CHECK((pushforward(identity, mu).probs() - mu.probs()).lpNorm<Eigen::Infinity>() <= 1e-15);

    const AbstractionMap collapse(s, make_space("one", 1), {0, 0, 0, 0});
    CHECK(pushforward(collapse, mu).probs()(0) == doctest::Approx(1.0));

    const AbstractionMap phi(s, b, {0, 1, 0, 1});
    const Dist pushed = pushforward(phi, mu);
    CHECK(pushed.probs()(0) == doctest::Approx(mu(0) + mu(2)).epsilon(1e-14));
    CHECK(pushed.probs()(1) == doctest::Approx(mu(1) + mu(3)).epsilon(1e-14));

    CHECK_THROWS_AS(AbstractionMap(s, b, {0, 0, 0, 0}), Error);  // not surjective
}

TEST_CASE("pullback") {
    const FiniteSpace s = make_space("S", 4), b = make_space("B", 2);
    const AbstractionMap phi(s, b, {0, 1, 0, 1});
    const ValueFn constant = ValueFn::constant(b, 0.3);
    CHECK(pullback_value(phi, constant).values().isApproxToConstant(0.3));

    Rng rng(611);
    Eigen::VectorXd vhat(2);
    vhat << rng.uniform(-2, 2), rng.uniform(-2, 2);
    const ValueFn pulled = pullback_value(phi, ValueFn(b, vhat));
    for (Eigen::Index i = 0; i < 4; ++i) CHECK(pulled(i) == vhat(phi(i)));
    // Pullback of a surjection preserves the sup norm exactly.
    CHECK(pulled.sup_norm() == ValueFn(b, vhat).sup_norm());
}

TEST_CASE("measure_mismatch") {
    const LumpablePair lump = make_lumpable(2, 2, 2, 0.9, 621);
    const Mismatch exact = measure_mismatch(lump.concrete, lump.abstract_mdp, lump.phi);
    CHECK(exact.eps_r <= 1e-12);
    CHECK(exact.eps_P <= 1e-12);

    // Shifting abstract rewards by delta moves eps_r only.
    Mdp shifted(lump.abstract_mdp.states, lump.abstract_mdp.actions, lump.abstract_mdp.trans,
                Eigen::MatrixXd(lump.abstract_mdp.reward.array() + 0.05), lump.abstract_mdp.gamma);
    const Mismatch mm = measure_mismatch(lump.concrete, shifted, lump.phi);
    CHECK(mm.eps_r == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(mm.eps_P <= 1e-12);

    // Brute-force double-loop oracle on a random near-lumpable instance.
    const LumpablePair near = make_lumpable(2, 2, 2, 0.9, 622);
    Eigen::MatrixXd noisy = near.abstract_mdp.trans.rows();
    Rng noise_rng(623);
    noisy.row(0) = 0.9 * noisy.row(0) + 0.1 * random_stochastic_row(noise_rng, 2).transpose();
    Mdp near_abs(near.abstract_mdp.states, near.abstract_mdp.actions,
                 Kernel(near.abstract_mdp.trans.from(), near.abstract_mdp.states, noisy),
                 near.abstract_mdp.reward, near.abstract_mdp.gamma);
    const Mismatch measured = measure_mismatch(near.concrete, near_abs, near.phi);
    double oracle_r = 0.0, oracle_p = 0.0;
    const Eigen::Index na = near.concrete.actions.size();
    for (Eigen::Index s = 0; s < near.concrete.states.size(); ++s) {
        for (Eigen::Index a = 0; a < na; ++a) {
            oracle_r = std::max(oracle_r,
                                std::abs(near.concrete.reward(s, a) - near_abs.reward(near.phi(s), a)));
            Eigen::VectorXd pushed = Eigen::VectorXd::Zero(near_abs.states.size());
            for (Eigen::Index sp = 0; sp < near.concrete.states.size(); ++sp)
                pushed(near.phi(sp)) += near.concrete.next_state_probs(s, a)(sp);
            oracle_p = std::max(oracle_p,
                                (pushed - near_abs.next_state_probs(near.phi(s), a)).lpNorm<1>());
        }
    }
    CHECK(measured.eps_r == doctest::Approx(oracle_r).epsilon(1e-12));
    CHECK(measured.eps_P == doctest::Approx(oracle_p).epsilon(1e-12));
}

TEST_CASE("exact homomorphism preserves policy values") {
    // Identity abstraction is trivially exact.
    const Mdp m = random_mdp("m", 3, 2, 0.8, 1.0, 631);
    std::vector<Eigen::Index> ident{0, 1, 2};
    const AbstractionMap id_map(m.states, m.states, ident);
    const Policy pihat = random_policy(m.states, m.actions, 632);
    const HomReport id_rep = verify_exact_hom(m, m, id_map, pihat);
    CHECK(id_rep.exact);
    CHECK(id_rep.intertwining_residual <= 1e-12);
    CHECK(id_rep.measured_gap <= 1e-10);

    // Four states lumped into two blocks.
    const LumpablePair lump = make_lumpable(2, 2, 2, 0.9, 633);
    const Policy abs_policy = random_policy(lump.abstract_mdp.states, lump.abstract_mdp.actions, 634);
    const HomReport rep = verify_exact_hom(lump.concrete, lump.abstract_mdp, lump.phi, abs_policy);
    CHECK(rep.exact);
    CHECK(rep.intertwining_residual <= 1e-10);
    CHECK(rep.measured_gap <= 1e-8);

    // Optimality variant.
    const HomReport opt = verify_exact_hom_optimal(lump.concrete, lump.abstract_mdp, lump.phi);
    CHECK(opt.intertwining_residual <= 1e-10);
    CHECK(opt.measured_gap <= 1e-8);

    // A non-exact pair is rejected.
    Mdp shifted(lump.abstract_mdp.states, lump.abstract_mdp.actions, lump.abstract_mdp.trans,
                Eigen::MatrixXd(lump.abstract_mdp.reward.array() + 0.01), lump.abstract_mdp.gamma);
    CHECK_THROWS_AS(verify_exact_hom(lump.concrete, shifted, lump.phi, abs_policy), NotExact);
}

TEST_CASE("approximate homomorphism distortion bound") {
    const LumpablePair lump = make_lumpable(2, 2, 2, 0.5, 641);
    const Policy pihat = random_policy(lump.abstract_mdp.states, lump.abstract_mdp.actions, 642);

    // Exact case: tiny measured gap.
    const HomReport exact = verify_approx_hom(lump.concrete, lump.abstract_mdp, lump.phi, pihat);
    CHECK(exact.measured_gap <= 1e-8);

    // Reward-only delta at gamma = 0.5 certifies exactly 2 delta.
    const double delta = 0.07;
    Mdp shifted(lump.abstract_mdp.states, lump.abstract_mdp.actions, lump.abstract_mdp.trans,
                Eigen::MatrixXd(lump.abstract_mdp.reward.array() + delta), lump.abstract_mdp.gamma);
    const HomReport rep = verify_approx_hom(lump.concrete, shifted, lump.phi, pihat);
    CHECK(rep.eps_r == doctest::Approx(delta).epsilon(1e-12));
    CHECK(rep.eps_P <= 1e-12);
    CHECK(rep.bound == doctest::Approx(2.0 * delta).epsilon(1e-9));
    CHECK(rep.measured_gap <= rep.bound + 1e-9);

    // Randomized audit: never a bound violation (verify_approx_hom throws on one).
    Rng seeds(643);
    for (int trial = 0; trial < 30; ++trial) {
        const LumpablePair base = make_lumpable(2, 2, 2, 0.5 + 0.4 * Rng(seeds.next_u64()).next_double(),
                                                seeds.next_u64());
        Rng rng(seeds.next_u64());
        Eigen::MatrixXd noisy_trans = base.abstract_mdp.trans.rows();
        for (Eigen::Index r = 0; r < noisy_trans.rows(); ++r) {
            const double lambda = rng.uniform(0.0, 0.2);
            noisy_trans.row(r) =
                (1.0 - lambda) * noisy_trans.row(r) + lambda * random_stochastic_row(rng, 2).transpose();
        }
        Eigen::MatrixXd noisy_reward = base.abstract_mdp.reward;
        for (Eigen::Index i = 0; i < noisy_reward.rows(); ++i)
            for (Eigen::Index j = 0; j < noisy_reward.cols(); ++j) noisy_reward(i, j) += rng.uniform(-0.1, 0.1);
        const Mdp noisy(base.abstract_mdp.states, base.abstract_mdp.actions,
                        Kernel(base.abstract_mdp.trans.from(), base.abstract_mdp.states, noisy_trans), noisy_reward,
                        base.abstract_mdp.gamma);
        const Policy p = random_policy(base.abstract_mdp.states, base.abstract_mdp.actions, seeds.next_u64());
        CHECK_NOTHROW(verify_approx_hom(base.concrete, noisy, base.phi, p));
    }
}

TEST_CASE("adapter defect closed form") {
    const LumpablePair lump = make_lumpable(2, 2, 2, 0.5, 651);
    const Policy pihat = random_policy(lump.abstract_mdp.states, lump.abstract_mdp.actions, 652);
    const double v_max = std::max(lump.concrete.v_max(), lump.abstract_mdp.v_max());

    // Exact homomorphism: zero defect.
    CHECK(adapter_defect(lump.concrete, lump.abstract_mdp, lump.phi, pihat, v_max) <= 1e-12);

    // Reward-only delta: defect is exactly delta.
    const double delta = 0.03;
    Mdp shifted(lump.abstract_mdp.states, lump.abstract_mdp.actions, lump.abstract_mdp.trans,
                Eigen::MatrixXd(lump.abstract_mdp.reward.array() + delta), lump.abstract_mdp.gamma);
    CHECK(adapter_defect(lump.concrete, shifted, lump.phi, pihat, v_max) == doctest::Approx(delta).epsilon(1e-10));

    // Sampled sup never exceeds the exact value.
    const Transformer a_conc = adapt_concrete(lump.concrete, pihat, lump.phi);
    const Transformer a_abs = adapt_abstract(shifted, pihat, lump.phi);
    const double exact = operator_distance(a_conc, a_abs, v_max);
    Rng rng(653);
    double sampled = 0.0;
    for (int k = 0; k < 10000; ++k) {
        Eigen::VectorXd vhat(lump.abstract_mdp.states.size());
        for (Eigen::Index i = 0; i < vhat.size(); ++i) vhat(i) = rng.uniform(-v_max, v_max);
        const ValueFn v(lump.abstract_mdp.states, vhat);
        sampled = std::max(sampled, sup_norm_diff(apply(a_conc, v), apply(a_abs, v)));
    }
    CHECK(sampled <= exact + 1e-12);
}

TEST_CASE("abstraction error propagates through circuit contexts") {
    const LumpablePair lump = make_lumpable(2, 2, 2, 0.5, 661);
    const Policy pihat = random_policy(lump.abstract_mdp.states, lump.abstract_mdp.actions, 662);
    // A declared common reward bound keeps the adapter type stable across
    // perturbed abstract models.
    const double r_bound = 2.0;
    const Mdp concrete(lump.concrete.states, lump.concrete.actions, lump.concrete.trans, lump.concrete.reward,
                       lump.concrete.gamma, r_bound);
    const Mdp abstract_base(lump.abstract_mdp.states, lump.abstract_mdp.actions, lump.abstract_mdp.trans,
                            lump.abstract_mdp.reward, lump.abstract_mdp.gamma, r_bound);
    const double v_max = r_bound / (1.0 - concrete.gamma);
    const FiniteSpace& s = concrete.states;
    const FiniteSpace& b = abstract_base.states;

    // Side transformer closing the loop: consumes values on S, produces on B.
    const Transformer raw = random_transformer(b, s, 0.5, 0.4, 663);
    const Transformer side(b, s, raw.reward, raw.gamma, raw.trans, v_max, v_max);
    const CircuitExpr context =
        CircuitExpr::series(CircuitExpr::hole(s, b, v_max, v_max), CircuitExpr::leaf(side));

    // Exact homomorphism: measured contextual gap vanishes.
    const ContextReport exact = abstraction_in_context(context, concrete, abstract_base, lump.phi, pihat);
    CHECK(exact.measured <= 1e-8);

    // Perturbed abstract model: measured <= certified in 50 random draws.
    Rng seeds(664);
    for (int trial = 0; trial < 50; ++trial) {
        Rng rng(seeds.next_u64());
        Eigen::MatrixXd noisy_reward = abstract_base.reward;
        for (Eigen::Index i = 0; i < noisy_reward.rows(); ++i)
            for (Eigen::Index j = 0; j < noisy_reward.cols(); ++j) noisy_reward(i, j) += rng.uniform(-0.05, 0.05);
        const Mdp noisy(b, abstract_base.actions, abstract_base.trans, noisy_reward, abstract_base.gamma, r_bound);
        const ContextReport rep = abstraction_in_context(context, concrete, noisy, lump.phi, pihat);
        CHECK(rep.measured <= rep.bound + 1e-9);
    }
}

TEST_CASE("trivial closure cross-checks the plain distortion bound") {
    const LumpablePair lump = make_lumpable(2, 2, 2, 0.5, 671);
    const Policy pihat = random_policy(lump.abstract_mdp.states, lump.abstract_mdp.actions, 672);
    const double delta = 0.04;
    Mdp shifted(lump.abstract_mdp.states, lump.abstract_mdp.actions, lump.abstract_mdp.trans,
                Eigen::MatrixXd(lump.abstract_mdp.reward.array() + delta), lump.abstract_mdp.gamma);
    const double v_max = std::max(lump.concrete.v_max(), shifted.v_max());

    const Transformer a_conc = adapt_concrete(lump.concrete, pihat, lump.phi);
    const Transformer a_abs = adapt_abstract(shifted, pihat, lump.phi);
    std::vector<Eigen::Index> section{0, 2};  // first state of each block
    const Transformer closed_conc = close_adapter_with_section(a_conc, lump.phi, section);
    const Transformer closed_abs = close_adapter_with_section(a_abs, lump.phi, section);

    // Closing the adapted abstract block through the section recovers the
    // abstract model's own backup.
    const Transformer abs_direct = policy_transformer(shifted, pihat);
    CHECK((closed_abs.reward.values() - abs_direct.reward.values()).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK((closed_abs.trans.rows() - abs_direct.trans.rows()).lpNorm<Eigen::Infinity>() <= 1e-12);

    // The trivial-context certified bound coincides with verify_approx_hom's.
    const StabilityReport stab = fixed_point_stability(closed_conc, closed_abs, lump.concrete.gamma);
    const HomReport hom = verify_approx_hom(lump.concrete, shifted, lump.phi, pihat);
    CHECK(stab.distance <= adapter_defect(lump.concrete, shifted, lump.phi, pihat, v_max) + 1e-12);
    CHECK(stab.bound <= hom.bound + 1e-9);
    CHECK(stab.measured <= stab.bound + 1e-9);
}

TEST_CASE("action-relabeling symmetry") {
    // Two-state mirror chain with swapped actions: phi swaps the states,
    // eta swaps the actions, rewards and dynamics are mirror images.
    const FiniteSpace s = make_space("S", 2), a = make_space("A", 2);
    Eigen::MatrixXd trans(4, 2);
    trans.row(0) << 0.8, 0.2;  // (s0, a0)
    trans.row(1) << 0.3, 0.7;  // (s0, a1)
    trans.row(2) << 0.7, 0.3;  // (s1, a0): mirror of (s0, a1)
    trans.row(3) << 0.2, 0.8;  // (s1, a1): mirror of (s0, a0)
    Eigen::MatrixXd reward(2, 2);
    reward << 0.5, -0.2, -0.2, 0.5;
    const Mdp m(s, a, Kernel(product(s, a), s, trans), reward, 0.9);
    const Policy sym_policy(s, a, Eigen::MatrixXd((Eigen::MatrixXd(2, 2) << 0.6, 0.4, 0.4, 0.6).finished()));

    const HomReport rep = verify_symmetry(m, {1, 0}, {1, 0}, sym_policy);
    CHECK(rep.exact);
    CHECK(rep.measured_gap <= 1e-10);

    // Identity pair is exact on any model.
    const Mdp any = random_mdp("r", 3, 2, 0.8, 1.0, 681);
    const Policy p = random_policy(any.states, any.actions, 682);
    CHECK(verify_symmetry(any, {0, 1, 2}, {0, 1}, p).exact);

    // Perturbed mirror still satisfies its certified bound.
    Eigen::MatrixXd bent = trans;
    bent.row(2) << 0.6, 0.4;
    const Mdp perturbed(s, a, Kernel(product(s, a), s, bent), reward, 0.9);
    const HomReport bent_rep = verify_symmetry(perturbed, {1, 0}, {1, 0}, sym_policy);
    CHECK(!bent_rep.exact);
    CHECK(bent_rep.measured_gap <= bent_rep.bound + 1e-9);
}

TEST_CASE("pullback never expands and defect grows with perturbation") {
    const LumpablePair lump = make_lumpable(3, 2, 2, 0.6, 691);
    const Policy pihat = random_policy(lump.abstract_mdp.states, lump.abstract_mdp.actions, 692);
    const double v_max = lump.concrete.v_max();
    double previous = -1.0;
    for (double scale : {0.0, 0.02, 0.05, 0.1}) {
        Mdp shifted(lump.abstract_mdp.states, lump.abstract_mdp.actions, lump.abstract_mdp.trans,
                    Eigen::MatrixXd(lump.abstract_mdp.reward.array() + scale), lump.abstract_mdp.gamma);
        const double defect = adapter_defect(lump.concrete, shifted, lump.phi, pihat, v_max);
        CHECK(defect >= previous - 1e-12);
        previous = defect;
    }
}
