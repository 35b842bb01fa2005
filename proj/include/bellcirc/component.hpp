#pragma once

#include "bellcirc/core.hpp"

namespace bellcirc {

// A stationary policy: a kernel from states to actions.
struct Policy {
    Policy(FiniteSpace state_space_, FiniteSpace action_space_, Eigen::MatrixXd rows)
        : state_space(std::move(state_space_)),
          action_space(std::move(action_space_)),
          kernel(state_space, action_space, std::move(rows)) {}

    Policy(FiniteSpace state_space_, FiniteSpace action_space_, Kernel kernel_)
        : state_space(std::move(state_space_)), action_space(std::move(action_space_)), kernel(std::move(kernel_)) {
        if (kernel.from() != state_space || kernel.to() != action_space)
            throw SpaceMismatch("Policy: kernel spaces do not match declared state/action spaces");
    }

    static Policy uniform(const FiniteSpace& states, const FiniteSpace& actions) {
        return Policy(states, actions,
                      Eigen::MatrixXd::Constant(states.size(), actions.size(),
                                                1.0 / static_cast<double>(actions.size())));
    }

    // Deterministic policy given as one action index per state.
    static Policy deterministic(const FiniteSpace& states, const FiniteSpace& actions,
                                const std::vector<Eigen::Index>& choice) {
        return Policy(states, actions, Kernel::deterministic(states, actions, choice));
    }

    FiniteSpace state_space;
    FiniteSpace action_space;
    Kernel kernel;
};

// An open discounted decision component: a one-step kernel from
// (state, action) pairs to (next state, reward signal) pairs, together with
// a scalarization table over the reward signal space and a discount factor.
// Input and output state spaces may differ, so components can be wired
// through typed interfaces.
struct Oddc {
    Oddc(FiniteSpace s_in_, FiniteSpace actions_, FiniteSpace s_out_, FiniteSpace reward_space_,
         Kernel kernel_, Eigen::VectorXd rho_, double gamma_);

    FiniteSpace s_in;
    FiniteSpace actions;
    FiniteSpace s_out;
    FiniteSpace reward_space;
    Kernel kernel;        // product(s_in, actions) -> product(s_out, reward_space)
    Eigen::VectorXd rho;  // scalarization over reward_space
    double gamma;
    double r_max;  // max |rho|; seeds the invariant-ball radius r_max / (1 - gamma)

    double v_max() const { return r_max / (1.0 - gamma); }
};

// Closed-loop one-step kernel: K^pi(s',r | s) = sum_a pi(a|s) K(s',r | s,a).
Kernel close_loop(const Oddc& m, const Policy& pi);

// One-step expected scalarized reward r^pi(s) = sum_{s',r} K^pi(s',r|s) rho(r),
// bounded by r_max.
ValueFn expected_reward(const Oddc& m, const Policy& pi);

}  // namespace bellcirc
