#pragma once

#include <cstdint>
#include <string>

#include "bellcirc/bellman.hpp"
#include "bellcirc/rng.hpp"

namespace bellcirc {

// Deterministic random instances. Every consumer records the seed it used,
// so audits are reproducible run to run.

Eigen::VectorXd random_stochastic_row(Rng& rng, Eigen::Index n);
Kernel random_kernel(const FiniteSpace& from, const FiniteSpace& to, std::uint64_t seed);
Dist random_dist(const FiniteSpace& space, std::uint64_t seed);
Policy random_policy(const FiniteSpace& states, const FiniteSpace& actions, std::uint64_t seed);

// Open component with |rewards| distinct signal levels scaled to r_max.
Oddc random_component(const std::string& prefix, Eigen::Index n_in, Eigen::Index n_actions, Eigen::Index n_out,
                      Eigen::Index n_rewards, double gamma, double r_max, std::uint64_t seed);

Mdp random_mdp(const std::string& prefix, Eigen::Index n_states, Eigen::Index n_actions, double gamma, double r_max,
               std::uint64_t seed);

// Affine transformer with ||reward|| <= r_max and balls r_max / (1 - gamma).
Transformer random_transformer(const FiniteSpace& in, const FiniteSpace& out, double gamma, double r_max,
                               std::uint64_t seed);

}  // namespace bellcirc
