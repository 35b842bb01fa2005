#pragma once

#include <cstdint>

#include "bellcirc/circuit.hpp"

namespace bellcirc {

// A local model perturbation: reward shift of magnitude eps_r and a
// transition change of exactly eps_P in row-wise total variation, applied
// to one module of a circuit.
struct PerturbationSpec {
    int target_module = 0;  // 0: first micro-step, 1: second micro-step
    double eps_r = 0.0;
    double eps_P = 0.0;  // in [0, 2]
    std::uint64_t seed = 0;
};

// Perturbs a transformer in affine normal form: the reward vector moves by
// exactly eps_r in sup norm (alternating signs) and every transition row
// moves by exactly eps_P in L1, by mixing with a random stochastic row.
Transformer perturb_transformer(const Transformer& t, const PerturbationSpec& spec);

struct ParallelFactorizationReport {
    double factor_value_1;     // V1 at the probe state
    double factor_value_2;
    double product_value;      // product-system value at the paired state
    double max_additivity_gap; // over all product states
    double coupled_gap;        // same check on the coupled counterexample
    bool pass;                 // additivity holds and the coupled control fails
};

// Solves the independent product system and both factors, checks the
// additive factorization, and runs a coupled-noise negative control that
// must break it.
ParallelFactorizationReport run_parallel_factorization(const Oddc& m1, const Oddc& m2, const Policy& pi1,
                                                       const Policy& pi2, std::uint64_t seed = 0xc0de);

struct RobustnessChainReport {
    double eps_formula_1;  // eps_r + gamma V_max eps_P for module 1
    double eps_formula_2;
    double eps_exact_1;    // exact operator distance for module 1
    double eps_exact_2;
    double macro_exact;    // exact operator distance of the series macros
    double macro_bound;    // eps_1 + gamma eps_2
    double value_gap;      // fixed-point deviation
    double value_bound;    // (eps_1 + gamma eps_2) / (1 - gamma^2)
    bool pass;
};

// The full two-module series robustness chain: local mismatch formula
// dominates the exact operator distance, the macro mismatch obeys the
// depth-attenuated sum, and the fixed-point gap obeys the closed-loop bound.
RobustnessChainReport run_two_module_robustness(const Transformer& t1, const Transformer& t2,
                                                const PerturbationSpec& spec);

// Convenience wrapper building the series circuit from two components.
RobustnessChainReport run_two_module_robustness(const Oddc& m1, const Policy& pi1, const Oddc& m2, const Policy& pi2,
                                                const PerturbationSpec& spec);

}  // namespace bellcirc
