#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "bellcirc/component.hpp"
#include "bellcirc/core.hpp"

namespace bellcirc {

// A typed affine Bellman transformer in normal form (reward, gamma, trans):
//   (T V)(x) = reward(x) + gamma * sum_y trans(y|x) V(y),
// mapping continuation values on the output space back to the input space.
// The affine normal form is closed under series composition (discounts
// multiply, kernels compose) and parallel tensoring, and it makes the
// ball-restricted operator metric exactly computable.
struct Transformer {
    Transformer(FiniteSpace in_space_, FiniteSpace out_space_, ValueFn reward_, double gamma_, Kernel trans_,
                double ball_in_, double ball_out_);

    FiniteSpace in_space;   // X
    FiniteSpace out_space;  // Y
    ValueFn reward;         // over X
    double gamma;
    Kernel trans;  // X -> Y state marginal of the closed loop
    double ball_in;
    double ball_out;

    bool closed() const { return in_space == out_space; }
};

// Builds the transformer induced by closing an open component with a policy.
// Ball radii default to r_max / (1 - gamma).
Transformer make_transformer(const Oddc& m, const Policy& pi);

// One Bellman backup. Throws BallViolation if v exceeds the output ball.
ValueFn apply(const Transformer& t, const ValueFn& v);

struct SolveResult {
    ValueFn value;
    int iterations;
    double residual;  // sup norm of T(value) - value
};

// Value iteration from V0 = 0 with the a-posteriori stopping rule
// ||TV - V|| <= tol * (1 - gamma), which guarantees ||V - V*|| <= tol.
// The optional callback sees every iterate (for rate diagnostics).
SolveResult solve_fixed_point(const Transformer& t, double tol,
                              const std::function<void(int, const ValueFn&)>& on_iterate = {});

// Direct solve of (I - gamma * trans) V = reward by LU factorization with
// partial pivoting. Independent of the iterative path.
ValueFn solve_linear(const Transformer& t);

struct McEstimate {
    double mean;
    double std_error;
    int horizon;
    int n_traj;
};

// Truncated-trajectory Monte Carlo estimate of the discounted return from
// state s0. Trajectories use independently derived seed streams, so the
// estimate is reproducible for a fixed seed.
McEstimate monte_carlo_value(const Oddc& m, const Policy& pi, Eigen::Index s0, int horizon, int n_traj,
                             std::uint64_t seed);

// Horizon H with gamma^H * v_max <= trunc_error.
int mc_horizon(double gamma, double v_max, double trunc_error);

// Exact sup over the ball ||V||_inf <= radius of ||tV - uV||_inf. For affine
// transformers the sup is attained at a sign vertex, giving the closed form
// max_x [ |dr(x)| + radius * || gamma_t P_t(x,.) - gamma_u P_u(x,.) ||_1 ].
double operator_distance(const Transformer& t, const Transformer& u, double radius);

// A classical finite MDP in flattened form: transition kernel keyed by the
// row-major (state|action) product space and a dense reward table.
struct Mdp {
    // declared_r_max, when given, must dominate the reward table and is used
    // as the reward bound shared with other models in distortion bounds.
    Mdp(FiniteSpace states_, FiniteSpace actions_, Kernel trans_, Eigen::MatrixXd reward_, double gamma_,
        std::optional<double> declared_r_max = std::nullopt);

    FiniteSpace states;
    FiniteSpace actions;
    Kernel trans;            // product(states, actions) -> states
    Eigen::MatrixXd reward;  // |S| x |A|
    double gamma;
    double r_max;
    bool r_max_declared;

    double v_max() const { return r_max / (1.0 - gamma); }
    // Row of the transition matrix for (s, a).
    Eigen::VectorXd next_state_probs(Eigen::Index s, Eigen::Index a) const {
        return trans.rows().row(s * actions.size() + a).transpose();
    }
};

// Policy-evaluation transformer of an MDP: reward averaged by the policy,
// transition marginalized over actions.
Transformer policy_transformer(const Mdp& m, const Policy& pi);

// Lifts an MDP to an equivalent open component whose reward-signal space is
// indexed by (state, action); rho carries the reward table.
Oddc to_component(const Mdp& m);

// Bellman optimality backup over a finite family of per-action affine
// backups: (T* V)(s) = max_a [ r(s,a) + gamma <P(.|s,a), V> ], with argmax
// ties broken toward the lowest action index.
class OptimalityOperator {
public:
    explicit OptimalityOperator(const Mdp& m);
    explicit OptimalityOperator(std::vector<Transformer> per_action);

    const FiniteSpace& space() const { return space_; }
    double gamma() const { return gamma_; }
    double ball() const { return ball_; }
    Eigen::Index num_actions() const { return static_cast<Eigen::Index>(per_action_.size()); }

    ValueFn apply(const ValueFn& v) const;
    // Greedy action per state at v, lowest index wins ties.
    std::vector<Eigen::Index> greedy(const ValueFn& v) const;
    // Value iteration on the optimality operator; also returns the greedy
    // policy at the fixed point.
    std::pair<SolveResult, std::vector<Eigen::Index>> solve(double tol) const;

private:
    FiniteSpace space_;
    double gamma_;
    double ball_;
    std::vector<Transformer> per_action_;
};

}  // namespace bellcirc
