#pragma once

// Independent test oracles. Everything here recomputes expected values by
// brute force (elementwise loops, exhaustive enumeration) and must stay
// independent of the library's implementation paths.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "bellcirc/bellman.hpp"
#include "bellcirc/core.hpp"

namespace oracles {

// Chapman-Kolmogorov by explicit double sum.
inline Eigen::MatrixXd compose_brute(const Eigen::MatrixXd& k, const Eigen::MatrixXd& l) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k.rows(), l.cols());
    for (Eigen::Index x = 0; x < k.rows(); ++x)
        for (Eigen::Index z = 0; z < l.cols(); ++z)
            for (Eigen::Index y = 0; y < k.cols(); ++y) out(x, z) += k(x, y) * l(y, z);
    return out;
}

// Total variation as the max of |<f, mu - nu>| over all sign vectors.
inline double tv_sign_enumeration(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu) {
    const Eigen::Index n = mu.size();
    double best = 0.0;
    for (long mask = 0; mask < (1L << n); ++mask) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) acc += ((mask >> i) & 1 ? 1.0 : -1.0) * (mu(i) - nu(i));
        best = std::max(best, std::abs(acc));
    }
    return best;
}

// One Bellman backup straight from the closed-loop kernel, as a double sum
// over (next state, reward signal) pairs.
inline Eigen::VectorXd backup_double_sum(const bellcirc::Kernel& closed, const Eigen::VectorXd& rho, double gamma,
                                         Eigen::Index n_out, const Eigen::VectorXd& v) {
    const Eigen::Index nr = rho.size();
    Eigen::VectorXd out(closed.from().size());
    for (Eigen::Index s = 0; s < closed.from().size(); ++s) {
        double acc = 0.0;
        for (Eigen::Index sp = 0; sp < n_out; ++sp)
            for (Eigen::Index r = 0; r < nr; ++r) acc += closed(s, sp * nr + r) * (rho(r) + gamma * v(sp));
        out(s) = acc;
    }
    return out;
}

// sup over the vertex set {-radius, +radius}^n of ||tV - uV||_inf, by full
// enumeration. Valid exactly because affine discrepancies are maximized at
// vertices of the sup-norm ball.
inline double operator_distance_vertices(const bellcirc::Transformer& t, const bellcirc::Transformer& u,
                                         double radius) {
    const Eigen::Index n = t.out_space.size();
    double best = 0.0;
    for (long mask = 0; mask < (1L << n); ++mask) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = ((mask >> i) & 1 ? radius : -radius);
        const Eigen::VectorXd dv = (t.reward.values() + t.gamma * (t.trans.rows() * v)) -
                                   (u.reward.values() + u.gamma * (u.trans.rows() * v));
        best = std::max(best, dv.lpNorm<Eigen::Infinity>());
    }
    return best;
}

// Optimal value by exhaustive enumeration of deterministic stationary
// policies, each evaluated by its own linear solve.
inline Eigen::VectorXd optimal_value_policy_enumeration(const bellcirc::Mdp& m) {
    const Eigen::Index ns = m.states.size();
    const Eigen::Index na = m.actions.size();
    std::vector<Eigen::Index> choice(static_cast<std::size_t>(ns), 0);
    Eigen::VectorXd best;
    while (true) {
        const bellcirc::Policy pi = bellcirc::Policy::deterministic(m.states, m.actions, choice);
        const Eigen::VectorXd v = bellcirc::solve_linear(bellcirc::policy_transformer(m, pi)).values();
        if (best.size() == 0)
            best = v;
        else
            best = best.cwiseMax(v);
        Eigen::Index pos = 0;
        while (pos < ns && choice[static_cast<std::size_t>(pos)] == na - 1) {
            choice[static_cast<std::size_t>(pos)] = 0;
            ++pos;
        }
        if (pos == ns) break;
        ++choice[static_cast<std::size_t>(pos)];
    }
    return best;
}

}  // namespace oracles
