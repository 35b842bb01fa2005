#include "bellcirc/generators.hpp"

#include <cmath>

namespace bellcirc {

Eigen::VectorXd random_stochastic_row(Rng& rng, Eigen::Index n) {
    Eigen::VectorXd row(n);
    for (Eigen::Index i = 0; i < n; ++i) row(i) = -std::log(1.0 - rng.next_double());
    row /= row.sum();
    return row;
}

Kernel random_kernel(const FiniteSpace& from, const FiniteSpace& to, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd rows(from.size(), to.size());
    for (Eigen::Index x = 0; x < from.size(); ++x) rows.row(x) = random_stochastic_row(rng, to.size()).transpose();
    return Kernel(from, to, std::move(rows));
}

Dist random_dist(const FiniteSpace& space, std::uint64_t seed) {
    Rng rng(seed);
    return Dist(space, random_stochastic_row(rng, space.size()));
}

Policy random_policy(const FiniteSpace& states, const FiniteSpace& actions, std::uint64_t seed) {
    return Policy(states, actions, random_kernel(states, actions, seed));
}

Oddc random_component(const std::string& prefix, Eigen::Index n_in, Eigen::Index n_actions, Eigen::Index n_out,
                      Eigen::Index n_rewards, double gamma, double r_max, std::uint64_t seed) {
    Rng rng(seed);
    const FiniteSpace s_in = make_space(prefix + "S", n_in);
    const FiniteSpace actions = make_space(prefix + "A", n_actions);
    const FiniteSpace s_out = n_out == n_in ? s_in : make_space(prefix + "T", n_out);
    const FiniteSpace rewards = make_space(prefix + "R", n_rewards);
    const Kernel kernel = random_kernel(product(s_in, actions), product(s_out, rewards), rng.next_u64());
    Eigen::VectorXd rho(n_rewards);
    for (Eigen::Index i = 0; i < n_rewards; ++i) rho(i) = rng.uniform(-r_max, r_max);
    // Pin the bound so r_max is attained, not just dominated.
    if (n_rewards > 0) rho(0) = r_max;
    return Oddc(s_in, actions, s_out, rewards, kernel, std::move(rho), gamma);
}

Mdp random_mdp(const std::string& prefix, Eigen::Index n_states, Eigen::Index n_actions, double gamma, double r_max,
               std::uint64_t seed) {
    Rng rng(seed);
    const FiniteSpace states = make_space(prefix + "S", n_states);
    const FiniteSpace actions = make_space(prefix + "A", n_actions);
    const Kernel trans = random_kernel(product(states, actions), states, rng.next_u64());
    Eigen::MatrixXd reward(n_states, n_actions);
    for (Eigen::Index s = 0; s < n_states; ++s)
        for (Eigen::Index a = 0; a < n_actions; ++a) reward(s, a) = rng.uniform(-r_max, r_max);
    return Mdp(states, actions, trans, std::move(reward), gamma);
}

Transformer random_transformer(const FiniteSpace& in, const FiniteSpace& out, double gamma, double r_max,
                               std::uint64_t seed) {
    Rng rng(seed);
    const Kernel trans = random_kernel(in, out, rng.next_u64());
    Eigen::VectorXd reward(in.size());
    for (Eigen::Index i = 0; i < in.size(); ++i) reward(i) = rng.uniform(-r_max, r_max);
    const double ball = r_max / (1.0 - gamma);
    return Transformer(in, out, ValueFn(in, std::move(reward)), gamma, trans, ball, ball);
}

}  // namespace bellcirc
