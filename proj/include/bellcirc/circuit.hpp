#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bellcirc/bellman.hpp"

namespace bellcirc {

// Uniform Lipschitz data of a guarded feedback map F(x,z) = (F_Y, F_Z):
//   alpha_z : contraction of F_Z in z (must be < 1)
//   eta_z   : sensitivity of F_Z to x
//   beta_z  : sensitivity of F_Y to z
//   a_x     : sensitivity of F_Y to x
struct TraceConstants {
    double alpha_z = 0.0;
    double eta_z = 0.0;
    double beta_z = 0.0;
    double a_x = 0.0;

    // Lipschitz bound of the traced map: a_x + beta_z * eta_z / (1 - alpha_z).
    double external_modulus() const { return a_x + beta_z * eta_z / (1.0 - alpha_z); }
    // Discrepancy amplification of the trace node: 1 + beta_z / (1 - alpha_z).
    double amplification() const { return 1.0 + beta_z / (1.0 - alpha_z); }
};

// Parameterized map on stacked value vectors, callable as f(x, z).
using ParamFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

// Guarded Banach trace of f = (f_out, f_fb): for each x, iterate the
// feedback component to its unique fixed point z_x and return f_out(x, z_x).
// Construction runs an empirical contraction check on sampled pairs in the
// declared balls; a sampled ratio >= 1 - 1e-9 is a hard UnguardedTrace.
class TracedMap {
public:
    TracedMap(ParamFn f_out, ParamFn f_fb, Eigen::Index x_dim, Eigen::Index z_dim, double alpha, double x_radius,
              double z_radius, double tol, std::uint64_t seed = 0x5eed);

    Eigen::VectorXd operator()(const Eigen::VectorXd& x) const;
    // Same solve from a caller-chosen starting point (the fixed point must
    // not depend on it).
    Eigen::VectorXd solve_from(const Eigen::VectorXd& x, const Eigen::VectorXd& z0) const;

    double alpha() const { return alpha_; }
    double max_sampled_ratio() const { return max_ratio_; }

private:
    Eigen::VectorXd fixed_point(const Eigen::VectorXd& x, Eigen::VectorXd z) const;

    ParamFn f_out_;
    ParamFn f_fb_;
    Eigen::Index x_dim_;
    Eigen::Index z_dim_;
    double alpha_;
    double tol_;
    double max_ratio_;
};

inline TracedMap banach_trace(ParamFn f_out, ParamFn f_fb, Eigen::Index x_dim, Eigen::Index z_dim, double alpha,
                              double x_radius, double z_radius, double tol, std::uint64_t seed = 0x5eed) {
    return TracedMap(std::move(f_out), std::move(f_fb), x_dim, z_dim, alpha, x_radius, z_radius, tol, seed);
}

// A wiring expression over transformer leaves. Series composes the two
// micro-step transformers (values flow backward: inner after outer),
// Parallel tensors independent components, Trace closes an
// endo-typed subcircuit into its guarded fixed point, and Hole marks the
// single pluggable position of a one-hole context.
class CircuitExpr {
public:
    enum class Kind { Leaf, Series, Parallel, Trace, Hole };

    static CircuitExpr leaf(Transformer t);
    // inner: first micro-step (toward the input), outer: second micro-step
    // (toward the continuation). Compiles to T_inner after T_outer.
    static CircuitExpr series(CircuitExpr inner, CircuitExpr outer);
    static CircuitExpr parallel(CircuitExpr left, CircuitExpr right);
    // pre must be endo-typed on feedback_space; declared constants, when
    // given, are validated against the exact affine constants.
    static CircuitExpr trace(CircuitExpr pre, FiniteSpace feedback_space, double feedback_radius,
                             std::optional<TraceConstants> declared = std::nullopt);
    static CircuitExpr hole(FiniteSpace in_space, FiniteSpace out_space, double ball_in, double ball_out);

    Kind kind() const { return node_->kind; }
    int num_holes() const { return node_->num_holes; }
    bool has_hole() const { return node_->num_holes > 0; }
    // True when the expression denotes a closed value (outermost Trace)
    // rather than an open transformer.
    bool is_closed_value() const { return node_->closed_value; }

    const FiniteSpace& in_space() const { return *node_->in_space; }
    const FiniteSpace& out_space() const { return *node_->out_space; }
    double ball_in() const { return node_->ball_in; }
    double ball_out() const { return node_->ball_out; }

    const Transformer& leaf_transformer() const;
    const CircuitExpr& child(int i) const;  // 0: inner/left/pre, 1: outer/right
    const std::optional<TraceConstants>& declared_constants() const { return node_->declared; }
    double feedback_radius() const { return node_->feedback_radius; }

private:
    struct Node {
        Kind kind;
        std::optional<Transformer> leaf;
        std::vector<CircuitExpr> children;
        std::optional<FiniteSpace> feedback_space;
        double feedback_radius = 0.0;
        std::optional<TraceConstants> declared;
        // Derived type info.
        std::optional<FiniteSpace> in_space;
        std::optional<FiniteSpace> out_space;
        double ball_in = 0.0;
        double ball_out = 0.0;
        int num_holes = 0;
        bool closed_value = false;
    };
    explicit CircuitExpr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
    std::shared_ptr<const Node> node_;
};

// Result of compiling a hole-free circuit: an affine transformer for open
// trees, or the traced fixed-point value for an outermost Trace.
struct Compiled {
    std::optional<Transformer> op;
    std::optional<ValueFn> value;

    bool is_value() const { return value.has_value(); }
};

// Affine series composition T_inner after T_outer in normal form:
// reward r1 + g1 P1 r2, discount g1 g2, transition P1 P2.
Transformer compose_transformers(const Transformer& inner, const Transformer& outer);

// Tensor transformer on the product space with additive scalarization.
// Requires a common discount.
Transformer tensor_transformers(const Transformer& left, const Transformer& right);

// Compiles a hole-free circuit. Trace nodes are evaluated through the
// guarded Banach trace (iterative), not by closed-form elimination.
Compiled compile(const CircuitExpr& c, double tol = 1e-10);

// Per-node certificate: Lipschitz data, trace constants, invariant balls,
// and the structurally computed context gain.
struct NodeCert {
    std::string path;
    std::string kind;
    double lip = 0.0;  // Lipschitz modulus of the compiled subexpression
    bool contains_hole = false;
    double gain = 1.0;  // perturbation gain of the sub-context (if it has the hole)
    std::optional<TraceConstants> trace;
    double ball_in = 0.0;
    double ball_out = 0.0;
    std::vector<NodeCert> children;
};

struct Certificate {
    NodeCert root;
    double gain = 1.0;      // L(C)
    double modulus = 0.0;   // kappa: Lipschitz modulus of the compiled circuit
};

// Certifies a circuit. For a context with a hole, hole_lip supplies the
// Lipschitz modulus of the component that will be plugged (needed wherever
// the hole sits under a composition or trace).
Certificate certify(const CircuitExpr& c, std::optional<double> hole_lip = std::nullopt);

// Substitutes a transformer for the unique Hole; type and balls must match.
CircuitExpr plug(const CircuitExpr& c, const Transformer& t);

struct CongruenceReport {
    double eps;       // typed operator discrepancy of the two components
    double gain;      // L(C)
    double modulus;   // kappa(C)
    double bound;     // L / (1 - kappa) * eps
    double measured;  // sup-norm gap of the two contextual fixed points
};

// Plugs t1 and t2 into the same certified context, closes both loops, and
// checks the contextual congruence bound against the measured gap.
// Certified constants that differ between the two plugged circuits are
// combined by pairwise maximum.
CongruenceReport congruence_bound(const CircuitExpr& c, const Transformer& t1, const Transformer& t2,
                                  double measured_eps);

struct StabilityReport {
    double distance;  // operator metric on the shared ball
    double bound;     // distance / (1 - kappa)
    double measured;  // fixed-point gap
};

// Fixed-point stability of two closed kappa-contractions on a shared ball.
StabilityReport fixed_point_stability(const Transformer& t1, const Transformer& t2, double kappa);

}  // namespace bellcirc
