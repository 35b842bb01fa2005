#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bellcirc/component.hpp"
#include "bellcirc/generators.hpp"
#include "oracles.hpp"

using namespace bellcirc;

namespace {

// One-step Monte Carlo average of the scalarized reward from state s.
double one_step_mc(const Oddc& m, const Policy& pi, Eigen::Index s, int n, std::uint64_t seed, double* stderr_out) {
    const Kernel closed = close_loop(m, pi);
    const Eigen::Index nr = m.reward_space.size();
    Rng rng(seed);
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.next_double();
        double acc = 0.0;
        Eigen::Index col = closed.to().size() - 1;
        for (Eigen::Index c = 0; c < closed.to().size(); ++c) {
            acc += closed(s, c);
            if (u < acc) {
                col = c;
                break;
            }
        }
        const double r = m.rho(col % nr);
        sum += r;
        sum_sq += r * r;
    }
    const double mean = sum / n;
    const double var = std::max(0.0, sum_sq / n - mean * mean);
    *stderr_out = std::sqrt(var / (n - 1));
    return mean;
}

}  // namespace

TEST_CASE("close_loop basics") {
    // Single action: the closed loop is the kernel with the action fixed.
    const Oddc m = random_component("m", 3, 1, 3, 2, 0.9, 1.0, 101);
    const Policy only = Policy::uniform(m.s_in, m.actions);
    const Kernel closed = close_loop(m, only);
    CHECK((closed.rows() - m.kernel.rows()).lpNorm<Eigen::Infinity>() <= 1e-15);

    // Uniform two-action policy averages the two action slices.
    const Oddc m2 = random_component("n", 3, 2, 3, 2, 0.9, 1.0, 102);
    const Kernel closed2 = close_loop(m2, Policy::uniform(m2.s_in, m2.actions));
    for (Eigen::Index s = 0; s < 3; ++s) {
        const Eigen::RowVectorXd expected = 0.5 * (m2.kernel.rows().row(2 * s) + m2.kernel.rows().row(2 * s + 1));
        CHECK((closed2.rows().row(s) - expected).lpNorm<Eigen::Infinity>() <= 1e-15);
    }

    // Against the pairing-composition oracle from the kernel layer.
    const Policy pi = random_policy(m2.s_in, m2.actions, 103);
    const Kernel via_pairing = compose_kernels(pair_with_policy(pi.kernel), m2.kernel);
    CHECK((close_loop(m2, pi).rows() - via_pairing.rows()).lpNorm<Eigen::Infinity>() <= 1e-14);

    // Rows stay stochastic.
    for (Eigen::Index s = 0; s < 3; ++s) CHECK(closed2.rows().row(s).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("close_loop space mismatch errors") {
    const Oddc m = random_component("m", 3, 2, 3, 2, 0.9, 1.0, 104);
    const Policy wrong_states = random_policy(make_space("W", 3), m.actions, 105);
    CHECK_THROWS_AS(close_loop(m, wrong_states), SpaceMismatch);
    const Policy wrong_actions = random_policy(m.s_in, make_space("B", 3), 106);
    CHECK_THROWS_AS(close_loop(m, wrong_actions), SpaceMismatch);
}

TEST_CASE("expected_reward trivial cases") {
    const FiniteSpace s = make_space("S", 3), a = make_space("A", 2), r = make_space("R", 2);
    const Kernel k = random_kernel(product(s, a), product(s, r), 111);

    const Oddc zero(s, a, s, r, k, Eigen::Vector2d(0.0, 0.0), 0.9);
    const Policy pi = random_policy(s, a, 112);
    CHECK(expected_reward(zero, pi).sup_norm() == 0.0);

    const Oddc constant(s, a, s, r, k, Eigen::Vector2d(0.7, 0.7), 0.9);
    const ValueFn er = expected_reward(constant, pi);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(er(i) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("expected_reward against one-step sampling oracle") {
    const Oddc m = random_component("m", 3, 2, 3, 3, 0.9, 1.0, 113);
    const Policy pi = random_policy(m.s_in, m.actions, 114);
    const ValueFn er = expected_reward(m, pi);
    for (Eigen::Index s = 0; s < m.s_in.size(); ++s) {
        double se = 0.0;
        const double mc = one_step_mc(m, pi, s, 1000000, 115 + static_cast<std::uint64_t>(s), &se);
        CHECK(std::abs(mc - er(s)) <= 3.0 * se + 1e-12);
    }
}

TEST_CASE("expected_reward bounded by r_max") {
    Rng seeds(121);
    for (int trial = 0; trial < 20; ++trial) {
        const Oddc m = random_component("m", 4, 3, 4, 3, 0.8, 2.0, seeds.next_u64());
        const Policy pi = random_policy(m.s_in, m.actions, seeds.next_u64());
        CHECK(expected_reward(m, pi).sup_norm() <= m.r_max + 1e-12);
    }
}

TEST_CASE("policy mixing mixes closures linearly") {
    const Oddc m = random_component("m", 3, 2, 3, 2, 0.9, 1.0, 131);
    const Policy p1 = random_policy(m.s_in, m.actions, 132);
    const Policy p2 = random_policy(m.s_in, m.actions, 133);
    const double lambda = 0.3;
    const Policy mixed(m.s_in, m.actions,
                       Eigen::MatrixXd(lambda * p1.kernel.rows() + (1.0 - lambda) * p2.kernel.rows()));
    const Eigen::MatrixXd expected =
        lambda * close_loop(m, p1).rows() + (1.0 - lambda) * close_loop(m, p2).rows();
    CHECK((close_loop(m, mixed).rows() - expected).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("component validation") {
    const FiniteSpace s = make_space("S", 2), a = make_space("A", 1), r = make_space("R", 2);
    const Kernel k = random_kernel(product(s, a), product(s, r), 141);
    CHECK_THROWS_AS(Oddc(s, a, s, r, k, Eigen::Vector2d(1.0, 0.0), 1.0), Error);
    CHECK_THROWS_AS(Oddc(s, a, s, r, k, Eigen::Vector3d(1.0, 0.0, 0.0), 0.5), SpaceMismatch);
    const Oddc ok(s, a, s, r, k, Eigen::Vector2d(1.0, -0.25), 0.5);
    CHECK(ok.r_max == 1.0);
    CHECK(ok.v_max() == doctest::Approx(2.0));
}
