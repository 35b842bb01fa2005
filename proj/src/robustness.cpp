#include "bellcirc/robustness.hpp"

#include <cmath>

#include "bellcirc/rng.hpp"

namespace bellcirc {

namespace {

// Random stochastic row whose L1 distance to `base` is at least eps_P, so
// the mixing rate that attains eps_P exactly stays in [0, 1].
Eigen::VectorXd mixing_partner(Rng& rng, const Eigen::VectorXd& base, double eps_P) {
    const Eigen::Index n = base.size();
    for (int attempt = 0; attempt < 256; ++attempt) {
        Eigen::VectorXd q(n);
        for (Eigen::Index i = 0; i < n; ++i) q(i) = -std::log(1.0 - rng.next_double());
        q /= q.sum();
        if ((q - base).lpNorm<1>() >= eps_P) return q;
    }
    // Deterministic fallback: a point mass on the entry farthest from mass 1.
    Eigen::Index lo;
    base.minCoeff(&lo);
    Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
    q(lo) = 1.0;
    if ((q - base).lpNorm<1>() < eps_P)
        throw Error("perturb_transformer: requested TV perturbation is unreachable from this row");
    return q;
}

}  // namespace

Transformer perturb_transformer(const Transformer& t, const PerturbationSpec& spec) {
    if (spec.eps_r < 0.0 || spec.eps_P < 0.0 || spec.eps_P > 2.0)
        throw Error("perturb_transformer: perturbation magnitudes out of range");
    Rng rng(Rng::derive(spec.seed, 0x9e37));
    Eigen::VectorXd reward = t.reward.values();
    for (Eigen::Index i = 0; i < reward.size(); ++i) reward(i) += (i % 2 == 0 ? spec.eps_r : -spec.eps_r);
    Eigen::MatrixXd rows = t.trans.rows();
    if (spec.eps_P > 0.0) {
        for (Eigen::Index x = 0; x < rows.rows(); ++x) {
            const Eigen::VectorXd base = rows.row(x).transpose();
            const Eigen::VectorXd q = mixing_partner(rng, base, spec.eps_P);
            const double lambda = spec.eps_P / (q - base).lpNorm<1>();
            rows.row(x) = ((1.0 - lambda) * base + lambda * q).transpose();
        }
    }
    return Transformer(t.in_space, t.out_space, ValueFn(t.in_space, std::move(reward)), t.gamma,
                       Kernel(t.in_space, t.out_space, std::move(rows)), t.ball_in, t.ball_out);
}

ParallelFactorizationReport run_parallel_factorization(const Oddc& m1, const Oddc& m2, const Policy& pi1,
                                                       const Policy& pi2, std::uint64_t seed) {
    if (m1.gamma != m2.gamma) throw TypeMismatch("run_parallel_factorization: components must share the discount");
    const Transformer t1 = make_transformer(m1, pi1);
    const Transformer t2 = make_transformer(m2, pi2);
    if (!t1.closed() || !t2.closed())
        throw TypeMismatch("run_parallel_factorization: components must be closed loops");
    const Transformer prod = tensor_transformers(t1, t2);

    const ValueFn v1 = solve_linear(t1);
    const ValueFn v2 = solve_linear(t2);
    const ValueFn vp = solve_linear(prod);

    ParallelFactorizationReport report{};
    report.factor_value_1 = v1(0);
    report.factor_value_2 = v2(0);
    report.product_value = vp(0);
    report.max_additivity_gap = 0.0;
    for (Eigen::Index i = 0; i < t1.in_space.size(); ++i)
        for (Eigen::Index j = 0; j < t2.in_space.size(); ++j)
            report.max_additivity_gap =
                std::max(report.max_additivity_gap, std::abs(vp(i * t2.in_space.size() + j) - v1(i) - v2(j)));

    // Negative control: couple the product transitions by mixing each row
    // with a correlated row (both factors forced toward their first state),
    // keeping rewards and marginalized behavior otherwise comparable.
    Rng rng(seed);
    Eigen::MatrixXd coupled = prod.trans.rows();
    const Eigen::Index cols = coupled.cols();
    for (Eigen::Index x = 0; x < coupled.rows(); ++x) {
        Eigen::VectorXd spike = Eigen::VectorXd::Zero(cols);
        spike(0) = 1.0;  // joint event, not a product of marginals
        const double lambda = 0.25 + 0.5 * rng.next_double();
        coupled.row(x) = ((1.0 - lambda) * coupled.row(x).transpose() + lambda * spike).transpose();
    }
    const Transformer coupled_t(prod.in_space, prod.out_space, prod.reward, prod.gamma,
                                Kernel(prod.in_space, prod.out_space, std::move(coupled)), prod.ball_in,
                                prod.ball_out);
    const ValueFn vc = solve_linear(coupled_t);
    // Best additive approximation gap of the coupled value: compare against
    // the factor solution of the uncoupled system.
    report.coupled_gap = 0.0;
    for (Eigen::Index i = 0; i < t1.in_space.size(); ++i)
        for (Eigen::Index j = 0; j < t2.in_space.size(); ++j)
            report.coupled_gap =
                std::max(report.coupled_gap, std::abs(vc(i * t2.in_space.size() + j) - v1(i) - v2(j)));
    report.pass = report.max_additivity_gap <= 1e-8;
    return report;
}

RobustnessChainReport run_two_module_robustness(const Transformer& t1, const Transformer& t2,
                                                const PerturbationSpec& spec) {
    if (t1.gamma != t2.gamma) throw TypeMismatch("run_two_module_robustness: modules must share the discount");
    if (std::abs(t1.ball_out - t2.ball_out) > kRenormLimit)
        throw TypeMismatch("run_two_module_robustness: modules must share the invariant ball (common reward bound)");
    const double gamma = t1.gamma;
    const double v_max = t1.ball_out;

    const Transformer p1 = spec.target_module == 0 ? perturb_transformer(t1, spec) : t1;
    const Transformer p2 = spec.target_module == 1 ? perturb_transformer(t2, spec) : t2;

    RobustnessChainReport report{};
    const double formula = spec.eps_r + gamma * v_max * spec.eps_P;
    report.eps_formula_1 = spec.target_module == 0 ? formula : 0.0;
    report.eps_formula_2 = spec.target_module == 1 ? formula : 0.0;
    report.eps_exact_1 = operator_distance(t1, p1, v_max);
    report.eps_exact_2 = operator_distance(t2, p2, v_max);

    const Transformer macro = compose_transformers(t1, t2);
    const Transformer macro_p = compose_transformers(p1, p2);
    report.macro_exact = operator_distance(macro, macro_p, v_max);
    report.macro_bound = report.eps_exact_1 + gamma * report.eps_exact_2;
    report.value_gap = sup_norm_diff(solve_linear(macro), solve_linear(macro_p));
    report.value_bound = report.macro_bound / (1.0 - gamma * gamma);

    report.pass = report.eps_exact_1 <= report.eps_formula_1 + kRenormLimit &&
                  report.eps_exact_2 <= report.eps_formula_2 + kRenormLimit &&
                  report.macro_exact <= report.macro_bound + kRenormLimit &&
                  report.value_gap <= report.value_bound + kRenormLimit;
    return report;
}

RobustnessChainReport run_two_module_robustness(const Oddc& m1, const Policy& pi1, const Oddc& m2, const Policy& pi2,
                                                const PerturbationSpec& spec) {
    return run_two_module_robustness(make_transformer(m1, pi1), make_transformer(m2, pi2), spec);
}

}  // namespace bellcirc
