#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bellcirc/bellman.hpp"

namespace bellcirc {

// A discounted POMDP with observation kernel keyed by (next state, action).
struct Pomdp {
    Pomdp(FiniteSpace states_, FiniteSpace actions_, FiniteSpace observations_, Kernel trans_, Kernel obs_,
          Eigen::MatrixXd reward_, double gamma_, Dist init_belief_);

    FiniteSpace states;
    FiniteSpace actions;
    FiniteSpace observations;
    Kernel trans;            // product(states, actions) -> states
    Kernel obs;              // product(states, actions) -> observations, keyed by (s', a)
    Eigen::MatrixXd reward;  // |S| x |A|
    double gamma;
    Dist init_belief;
    double r_max;

    double v_max() const { return r_max / (1.0 - gamma); }
};

struct BayesResult {
    Dist posterior;
    double pred_prob;
    bool zero_probability;  // observation had zero predictive mass
};

// One filtering step: predictive probability of o under (b, a) and the
// posterior belief. Zero-probability observations yield the uniform belief
// with the flag set; such branches carry no mass.
BayesResult bayes_update(const Pomdp& p, const Dist& b, Eigen::Index a, Eigen::Index o);

// Exact reachable-belief tree to a finite horizon, no merging.
struct BeliefNode {
    Dist belief;
    int depth;
    // Per action: lifted reward and the observation branches
    // (observation, predictive probability, child node index).
    struct Branch {
        Eigen::Index observation;
        double probability;
        std::size_t child;
    };
    std::vector<double> lifted_reward;             // r_B(b, a) per action
    std::vector<std::vector<Branch>> transitions;  // per action
};

struct BeliefTree {
    std::vector<BeliefNode> nodes;  // node 0 is the initial belief
    int horizon;
};

// Enumerates beliefs reachable from the initial belief up to `horizon`
// steps. Throws BudgetExceeded beyond max_nodes.
BeliefTree belief_mdp_to_horizon(const Pomdp& p, int horizon, std::size_t max_nodes = 1000000);

// A belief policy: action distribution as a function of (belief, depth).
using BeliefPolicy = std::function<Dist(const Dist& belief, int depth)>;

// Exact truncated discounted return of the belief policy on the tree.
double belief_tree_value(const Pomdp& p, const BeliefTree& tree, const BeliefPolicy& policy);

struct BeliefEquivalenceReport {
    double tree_value;   // exact expectation on the enumerated belief tree
    double mc_mean;      // POMDP simulation with an online filter
    double mc_std_error;
    double tolerance;    // 4 sigma + gamma^H v_max
    bool pass;
};

// Runs the same belief policy on (i) the POMDP with an online Bayes filter
// and (ii) the enumerated belief tree, and compares truncated returns.
BeliefEquivalenceReport verify_belief_equivalence(const Pomdp& p, const BeliefPolicy& policy, int horizon,
                                                  int n_traj, std::uint64_t seed);

// A realized trajectory prefix (s_0, a_0, r_0, s_1, ..., s_T).
struct TrajectoryPrefix {
    struct Step {
        Eigen::Index state;
        Eigen::Index action;
        double reward;
        Eigen::Index next_state;
    };
    std::vector<Step> steps;
};

struct ImportanceWeights {
    std::vector<double> per_step;    // pi(a_t|s_t) / mu(a_t|s_t)
    std::vector<double> cumulative;  // prefix products, cumulative[t] covers steps 0..t
};

// Finite-prefix likelihood ratio between target and behavior policies along
// a realized trajectory. Throws AbsoluteContinuityViolation when the
// behavior policy gives zero mass to a realized action the target needs.
ImportanceWeights importance_weights(const TrajectoryPrefix& traj, const Policy& pi, const Policy& mu);

// All trajectory prefixes of a small closed loop, with exact probabilities.
struct WeightedPrefix {
    TrajectoryPrefix prefix;
    double probability;
};
std::vector<WeightedPrefix> enumerate_prefixes(const Mdp& m, const Policy& behavior, const Dist& init, int horizon,
                                               std::size_t max_prefixes = 2000000);

struct FactorizationReport {
    double max_factorization_gap;  // relative |W - W1*W2| over all enumerated prefixes
    double log_second_moment_product;
    std::vector<double> log_second_moments;  // per module
    double log_additivity_gap;
    bool pass;
};

// Parallel product circuit: global importance weights must equal the
// product of module weights prefix by prefix, and the second moments must
// be log-additive. Everything is computed by full enumeration.
FactorizationReport factorized_weights(const Mdp& m1, const Mdp& m2, const Policy& pi1, const Policy& mu1,
                                       const Policy& pi2, const Policy& mu2, const Dist& init1, const Dist& init2,
                                       int horizon);

struct SeriesChainRuleReport {
    double max_gap;  // relative |W_global - W_interface_chain| over enumerated prefixes
    bool pass;
};

// Series case: on an instance whose state carries the interface coordinate
// explicitly (state = (upstream, downstream)), the global weight must equal
// the chain-rule product of the per-coordinate conditional weights.
SeriesChainRuleReport series_chain_rule_check(const Mdp& m1, const Mdp& m2, const Policy& pi1, const Policy& mu1,
                                              const Policy& pi2, const Policy& mu2, const Dist& init1,
                                              const Dist& init2, int horizon);

struct ChangeOfMeasureReport {
    double martingale_expectation;  // E_mu[W_T] over the enumerated prefix space
    double martingale_gap;          // |E_mu[W_T] - 1|
    double target_expectation;      // E_pi[g]
    double reweighted_expectation;  // E_mu[W g]
    double identity_gap;
    bool pass;
};

// Exact change-of-measure audit on a fully enumerated prefix space. The
// test functional g is the truncated discounted return under a random
// reward table derived from the seed (seed 0 uses the model's own rewards).
ChangeOfMeasureReport change_of_measure_check(const Mdp& m, const Policy& pi, const Policy& mu, const Dist& init,
                                              int horizon, std::uint64_t seed = 0);

struct TrackingReport {
    std::vector<double> drift;          // eta_t between consecutive operators
    std::vector<double> step_gap;       // ||V*_{t+1} - V*_t|| (exact mode)
    std::vector<double> step_bound;     // eta_t / (1 - gamma)
    double cumulative_gap;              // ||V*_T - V*_0||
    double cumulative_bound;            // sum of step bounds
    std::vector<double> iterate_error;  // ||V_t - V*_t|| (one-step mode)
    std::vector<double> iterate_bound;  // recursion bound at every t
    bool pass;
};

enum class TrackingMode { Exact, OneStep };

// Drift audit over a time-indexed family of closed transformers sharing a
// space and discount. Exact mode checks the per-step and cumulative
// fixed-point bounds; one-step mode checks the iterate-tracking recursion.
TrackingReport track_fixed_points(const std::vector<Transformer>& ops, TrackingMode mode);

}  // namespace bellcirc
