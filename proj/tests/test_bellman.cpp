#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bellcirc/bellman.hpp"
#include "bellcirc/generators.hpp"
#include "oracles.hpp"

using namespace bellcirc;

namespace {

// Absorbing two-state chain: s0 pays 1 and moves to s1, s1 pays 0 forever.
Oddc absorbing_chain(double gamma) {
    const FiniteSpace s = make_space("s", 2), a = make_space("a", 1), r = make_space("r", 2);
    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(2, 4);
    rows(0, 1 * 2 + 0) = 1.0;  // s0 -> (s1, r0)
    rows(1, 1 * 2 + 1) = 1.0;  // s1 -> (s1, r1)
    return Oddc(s, a, s, r, Kernel(product(s, a), product(s, r), rows), Eigen::Vector2d(1.0, 0.0), gamma);
}

Transformer two_state_example() {
    const FiniteSpace s = make_space("s", 2);
    Eigen::MatrixXd p(2, 2);
    p << 0.5, 0.5, 0.0, 1.0;
    return Transformer(s, s, ValueFn(s, Eigen::Vector2d(1.0, 0.0)), 0.5, Kernel(s, s, p), 2.0, 2.0);
}

}  // namespace

TEST_CASE("make_transformer structure") {
    const Oddc chain = absorbing_chain(0.5);
    const Policy pi = Policy::uniform(chain.s_in, chain.actions);
    const Transformer t = make_transformer(chain, pi);
    CHECK(t.reward.values().isApprox(Eigen::Vector2d(1.0, 0.0)));
    Eigen::MatrixXd expected(2, 2);
    expected << 0.0, 1.0, 0.0, 1.0;
    CHECK(t.trans.rows().isApprox(expected));
    CHECK(t.ball_in == doctest::Approx(2.0));

    const Oddc zero_r = random_component("z", 3, 2, 3, 1, 0.9, 0.0, 201);
    const Policy pz = random_policy(zero_r.s_in, zero_r.actions, 202);
    CHECK(make_transformer(zero_r, pz).reward.sup_norm() == 0.0);
}

TEST_CASE("apply matches the expectation oracle") {
    const Oddc m = random_component("m", 4, 2, 4, 3, 0.8, 1.0, 203);
    const Policy pi = random_policy(m.s_in, m.actions, 204);
    const Transformer t = make_transformer(m, pi);
    const Kernel closed = close_loop(m, pi);
    Rng rng(205);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd v(m.s_out.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-m.v_max(), m.v_max());
        const Eigen::VectorXd expected = oracles::backup_double_sum(closed, m.rho, m.gamma, m.s_out.size(), v);
        CHECK((apply(t, ValueFn(m.s_out, v)).values() - expected).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
}

TEST_CASE("apply affine laws") {
    const Transformer t = two_state_example();
    const ValueFn zero = ValueFn::zero(t.out_space);
    CHECK(apply(t, zero).values().isApprox(t.reward.values()));

    const ValueFn c = ValueFn::constant(t.out_space, 1.2);
    const ValueFn shifted = apply(t, c);
    for (Eigen::Index i = 0; i < 2; ++i)
        CHECK(shifted(i) == doctest::Approx(t.reward(i) + t.gamma * 1.2).epsilon(1e-14));

    CHECK_THROWS_AS(apply(t, ValueFn::constant(t.out_space, 5.0)), BallViolation);
}

TEST_CASE("contraction and monotonicity") {
    Rng seeds(211);
    for (int trial = 0; trial < 20; ++trial) {
        const double gamma = 0.5 + 0.45 * Rng(seeds.next_u64()).next_double();
        const FiniteSpace s = make_space("S", 5);
        const Transformer t = random_transformer(s, s, gamma, 1.0, seeds.next_u64());
        Rng rng(seeds.next_u64());
        Eigen::VectorXd v(5), w(5);
        for (Eigen::Index i = 0; i < 5; ++i) {
            v(i) = rng.uniform(-t.ball_out, t.ball_out);
            w(i) = rng.uniform(-t.ball_out, t.ball_out);
        }
        const ValueFn fv(s, v), fw(s, w);
        CHECK(sup_norm_diff(apply(t, fv), apply(t, fw)) <= gamma * sup_norm_diff(fv, fw) + 1e-12);

        // Monotonicity: push w above v pointwise.
        Eigen::VectorXd above = v.array() + rng.uniform(0.0, 0.4);
        above = above.cwiseMin(t.ball_out);
        const Eigen::VectorXd lhs = apply(t, fv).values();
        const Eigen::VectorXd rhs = apply(t, ValueFn(s, above)).values();
        CHECK((rhs - lhs).minCoeff() >= -1e-12);

        // Ball invariance at v_max.
        CHECK(apply(t, ValueFn::constant(s, t.ball_out)).sup_norm() <= t.ball_out + 1e-12);
    }
}

TEST_CASE("solve_fixed_point basics") {
    const FiniteSpace s = make_space("S", 3);
    Transformer zero(s, s, ValueFn::zero(s), 0.7, random_kernel(s, s, 221), 0.0, 0.0);
    const SolveResult r = solve_fixed_point(zero, 1e-10);
    CHECK(r.value.sup_norm() == 0.0);
    CHECK(r.iterations == 1);

    const SolveResult two = solve_fixed_point(two_state_example(), 1e-12);
    CHECK(two.value(0) == doctest::Approx(4.0 / 3.0).epsilon(1e-11));
    CHECK(two.value(1) == doctest::Approx(0.0));

    const Transformer open_t = random_transformer(s, make_space("T", 2), 0.5, 1.0, 222);
    CHECK_THROWS_AS(solve_fixed_point(open_t, 1e-8), TypeMismatch);
}

TEST_CASE("solve_linear closed forms and residuals") {
    const FiniteSpace s = make_space("S", 6);
    const Transformer constant(s, s, ValueFn::constant(s, 0.9), 0.75, random_kernel(s, s, 231), 3.6, 3.6);
    const ValueFn v = solve_linear(constant);
    for (Eigen::Index i = 0; i < 6; ++i) CHECK(v(i) == doctest::Approx(0.9 / 0.25).epsilon(1e-12));

    CHECK(solve_linear(two_state_example()).values().isApprox(Eigen::Vector2d(4.0 / 3.0, 0.0), 1e-12));

    Rng seeds(232);
    for (int trial = 0; trial < 10; ++trial) {
        const Transformer t = random_transformer(s, s, 0.9, 1.0, seeds.next_u64());
        const ValueFn fp = solve_linear(t);
        const double residual =
            (fp.values() - (t.reward.values() + t.gamma * (t.trans.rows() * fp.values()))).lpNorm<Eigen::Infinity>();
        CHECK(residual <= 1e-10);
    }
}

TEST_CASE("value iteration agrees with the linear solve") {
    Rng seeds(241);
    for (int trial = 0; trial < 10; ++trial) {
        const FiniteSpace s = make_space("S", 20);
        const Transformer t = random_transformer(s, s, 0.9, 1.0, seeds.next_u64());
        const SolveResult vi = solve_fixed_point(t, 1e-10);
        CHECK(sup_norm_diff(vi.value, solve_linear(t)) <= 1e-8);
    }
}

TEST_CASE("geometric convergence rate per iteration") {
    const FiniteSpace s = make_space("S", 8);
    const Transformer t = random_transformer(s, s, 0.85, 1.0, 251);
    const ValueFn star = solve_linear(t);
    double prev_err = star.sup_norm();  // error of V_0 = 0
    solve_fixed_point(t, 1e-10, [&](int, const ValueFn& v) {
        const double err = sup_norm_diff(v, star);
        if (prev_err > 1e-12) CHECK(err <= t.gamma * prev_err + 1e-12);
        prev_err = err;
    });
}

TEST_CASE("monte carlo value") {
    const Oddc chain = absorbing_chain(0.5);
    const Policy pi = Policy::uniform(chain.s_in, chain.actions);
    const McEstimate det = monte_carlo_value(chain, pi, 0, 30, 100, 261);
    CHECK(det.mean == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(det.std_error == doctest::Approx(0.0));

    const Oddc zero = random_component("z", 3, 2, 3, 1, 0.9, 0.0, 262);
    const Policy pz = random_policy(zero.s_in, zero.actions, 263);
    const McEstimate z = monte_carlo_value(zero, pz, 0, 10, 50, 264);
    CHECK(z.mean == 0.0);
    CHECK(z.std_error == 0.0);

    const Oddc m = random_component("m", 5, 2, 5, 3, 0.8, 1.0, 265);
    const Policy pm = random_policy(m.s_in, m.actions, 266);
    const int horizon = mc_horizon(m.gamma, m.v_max(), 1e-4);
    const McEstimate est = monte_carlo_value(m, pm, 0, horizon, 100000, 267);
    const ValueFn exact = solve_linear(make_transformer(m, pm));
    CHECK(std::abs(est.mean - exact(0)) <= 4.0 * est.std_error + 1e-4);
}

TEST_CASE("operator distance exact form") {
    const FiniteSpace s = make_space("S", 3);
    const Transformer t = random_transformer(s, s, 0.8, 1.0, 271);
    CHECK(operator_distance(t, t, 5.0) == 0.0);

    // Reward-only perturbation.
    Eigen::VectorXd r2 = t.reward.values();
    r2(0) += 0.05;
    const Transformer u(s, s, ValueFn(s, r2), t.gamma, t.trans, t.ball_in, t.ball_out);
    CHECK(operator_distance(t, u, 5.0) == doctest::Approx(0.05).epsilon(1e-12));

    // Vertex enumeration oracle, including operators with different discounts.
    Rng seeds(272);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(seeds.next_below(4));
        const FiniteSpace sp = make_space("T", n);
        const double radius = 0.5 + Rng(seeds.next_u64()).next_double() * 3.0;
        const Transformer a = random_transformer(sp, sp, 0.7, 1.0, seeds.next_u64());
        const Transformer b = random_transformer(sp, sp, trial % 2 == 0 ? 0.7 : 0.9, 1.0, seeds.next_u64());
        const double exact = operator_distance(a, b, radius);
        const double vertices = oracles::operator_distance_vertices(a, b, radius);
        CHECK(exact == doctest::Approx(vertices).epsilon(1e-10));
    }

    // Full enumeration at n = 12, plus a sampled vertex sup that can only
    // fall below the exact closed form.
    {
        const Eigen::Index n = 12;
        const FiniteSpace sp = make_space("T", n);
        const double radius = 2.5;
        const Transformer a = random_transformer(sp, sp, 0.8, 1.0, 273);
        const Transformer b = random_transformer(sp, sp, 0.8, 1.0, 274);
        const double exact = operator_distance(a, b, radius);
        CHECK(exact == doctest::Approx(oracles::operator_distance_vertices(a, b, radius)).epsilon(1e-10));
        Rng rng(275);
        double sampled = 0.0;
        for (int k = 0; k < 100000; ++k) {
            Eigen::VectorXd v(n);
            for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.next_below(2) ? radius : -radius;
            const ValueFn fv(sp, v);
            sampled = std::max(sampled, sup_norm_diff(apply(a, fv), apply(b, fv)));
        }
        CHECK(sampled <= exact + 1e-12);
        CHECK(sampled == doctest::Approx(exact).epsilon(1e-6));  // attained at a vertex
    }
}

TEST_CASE("optimality backup") {
    // Single action reduces to the policy backup.
    const Mdp single = random_mdp("s", 4, 1, 0.9, 1.0, 281);
    const OptimalityOperator opt1(single);
    const Transformer pol = policy_transformer(single, Policy::uniform(single.states, single.actions));
    Rng rng(282);
    Eigen::VectorXd v(4);
    for (Eigen::Index i = 0; i < 4; ++i) v(i) = rng.uniform(-5, 5);
    CHECK(opt1.apply(ValueFn(single.states, v)).values().isApprox(apply(pol, ValueFn(single.states, v)).values()));

    // Identical actions tie-break to action 0.
    const FiniteSpace s = make_space("S", 3), a2 = make_space("A", 2);
    Eigen::MatrixXd rows(6, 3);
    const Kernel base = random_kernel(s, s, 283);
    for (Eigen::Index i = 0; i < 3; ++i) {
        rows.row(2 * i) = base.rows().row(i);
        rows.row(2 * i + 1) = base.rows().row(i);
    }
    Eigen::MatrixXd reward(3, 2);
    reward.col(0).setConstant(0.5);
    reward.col(1).setConstant(0.5);
    const Mdp tie(s, a2, Kernel(product(s, a2), s, rows), reward, 0.9);
    const OptimalityOperator opt_tie(tie);
    const auto greedy = opt_tie.greedy(ValueFn::zero(s));
    for (Eigen::Index g : greedy) CHECK(g == 0);

    // Fixed point against exhaustive deterministic-policy enumeration.
    Rng seeds(284);
    for (int trial = 0; trial < 5; ++trial) {
        const Mdp m = random_mdp("m", 5, 3, 0.85, 1.0, seeds.next_u64());
        const OptimalityOperator opt(m);
        const ValueFn vstar = opt.solve(1e-11).first.value;
        const Eigen::VectorXd enumerated = oracles::optimal_value_policy_enumeration(m);
        CHECK((vstar.values() - enumerated).lpNorm<Eigen::Infinity>() <= 1e-8);
    }

    // T* is a gamma-contraction empirically.
    const Mdp m = random_mdp("c", 6, 3, 0.9, 1.0, 285);
    const OptimalityOperator opt(m);
    Rng rng2(286);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd x(6), y(6);
        for (Eigen::Index i = 0; i < 6; ++i) {
            x(i) = rng2.uniform(-m.v_max(), m.v_max());
            y(i) = rng2.uniform(-m.v_max(), m.v_max());
        }
        const ValueFn fx(m.states, x), fy(m.states, y);
        CHECK(sup_norm_diff(opt.apply(fx), opt.apply(fy)) <= m.gamma * sup_norm_diff(fx, fy) + 1e-12);
    }
}

TEST_CASE("mdp component equivalence") {
    const Mdp m = random_mdp("m", 4, 2, 0.8, 1.0, 291);
    const Policy pi = random_policy(m.states, m.actions, 292);
    const Transformer direct = policy_transformer(m, pi);
    const Transformer via_component = make_transformer(to_component(m), pi);
    CHECK((direct.reward.values() - via_component.reward.values()).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK((direct.trans.rows() - via_component.trans.rows()).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("oracle triangle on random mdps") {
    Rng seeds(301);
    for (int trial = 0; trial < 5; ++trial) {
        const Mdp m = random_mdp("m", 6, 2, 0.8, 1.0, seeds.next_u64());
        const Policy pi = random_policy(m.states, m.actions, seeds.next_u64());
        const Transformer t = policy_transformer(m, pi);
        const ValueFn linear = solve_linear(t);
        const ValueFn vi = solve_fixed_point(t, 1e-10).value;
        CHECK(sup_norm_diff(linear, vi) <= 1e-8);
        const int horizon = mc_horizon(m.gamma, m.v_max(), 1e-4);
        const McEstimate mc = monte_carlo_value(to_component(m), pi, 0, horizon, 20000, seeds.next_u64());
        CHECK(std::abs(mc.mean - linear(0)) <= 4.0 * mc.std_error + 1e-4);
    }
}
