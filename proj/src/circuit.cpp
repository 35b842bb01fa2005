#include "bellcirc/circuit.hpp"

#include <cmath>

#include "bellcirc/rng.hpp"

namespace bellcirc {

namespace {

Eigen::VectorXd sample_ball(Rng& rng, Eigen::Index dim, double radius) {
    Eigen::VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = rng.uniform(-radius, radius);
    return v;
}

}  // namespace

TracedMap::TracedMap(ParamFn f_out, ParamFn f_fb, Eigen::Index x_dim, Eigen::Index z_dim, double alpha,
                     double x_radius, double z_radius, double tol, std::uint64_t seed)
    : f_out_(std::move(f_out)),
      f_fb_(std::move(f_fb)),
      x_dim_(x_dim),
      z_dim_(z_dim),
      alpha_(alpha),
      tol_(tol),
      max_ratio_(0.0) {
    if (!(alpha_ >= 0.0) || alpha_ >= 1.0)
        throw UnguardedTrace("banach_trace: feedback certificate alpha = " + std::to_string(alpha_) + " is not < 1");
    if (tol_ <= 0.0) throw Error("banach_trace: tolerance must be positive");
    if (z_dim_ == 0) return;  // unit feedback wire, nothing to verify
    Rng rng(seed);
    const int samples = 1000;
    for (int k = 0; k < samples; ++k) {
        const Eigen::VectorXd x = sample_ball(rng, x_dim_, x_radius);
        const Eigen::VectorXd z1 = sample_ball(rng, z_dim_, z_radius);
        const Eigen::VectorXd z2 = sample_ball(rng, z_dim_, z_radius);
        const double dz = (z1 - z2).lpNorm<Eigen::Infinity>();
        if (dz == 0.0) continue;
        const double df = (f_fb_(x, z1) - f_fb_(x, z2)).lpNorm<Eigen::Infinity>();
        const double ratio = df / dz;
        max_ratio_ = std::max(max_ratio_, ratio);
        if (ratio >= 1.0 - 1e-9)
            throw UnguardedTrace("banach_trace: sampled feedback ratio " + std::to_string(ratio) +
                                 " contradicts the contraction certificate");
    }
}

Eigen::VectorXd TracedMap::fixed_point(const Eigen::VectorXd& x, Eigen::VectorXd z) const {
    const double stop = tol_ * (1.0 - alpha_);
    const int max_iter = 1000000;
    for (int iter = 0; iter < max_iter; ++iter) {
        Eigen::VectorXd next = f_fb_(x, z);
        const double residual = (next - z).lpNorm<Eigen::Infinity>();
        z = std::move(next);
        if (residual <= stop) return z;
    }
    throw MaxIterExceeded("banach_trace: feedback iteration did not settle");
}

Eigen::VectorXd TracedMap::operator()(const Eigen::VectorXd& x) const {
    return f_out_(x, fixed_point(x, Eigen::VectorXd::Zero(z_dim_)));
}

Eigen::VectorXd TracedMap::solve_from(const Eigen::VectorXd& x, const Eigen::VectorXd& z0) const {
    return f_out_(x, fixed_point(x, z0));
}

CircuitExpr CircuitExpr::leaf(Transformer t) {
    auto node = std::make_shared<Node>();
    node->kind = Kind::Leaf;
    node->in_space = t.in_space;
    node->out_space = t.out_space;
    node->ball_in = t.ball_in;
    node->ball_out = t.ball_out;
    node->leaf = std::move(t);
    return CircuitExpr(std::move(node));
}

CircuitExpr CircuitExpr::hole(FiniteSpace in_space, FiniteSpace out_space, double ball_in, double ball_out) {
    auto node = std::make_shared<Node>();
    node->kind = Kind::Hole;
    node->in_space = std::move(in_space);
    node->out_space = std::move(out_space);
    node->ball_in = ball_in;
    node->ball_out = ball_out;
    node->num_holes = 1;
    return CircuitExpr(std::move(node));
}

CircuitExpr CircuitExpr::series(CircuitExpr inner, CircuitExpr outer) {
    if (inner.is_closed_value() || outer.is_closed_value())
        throw TypeError("series: children must be open circuits (trace may only close the outermost loop)");
    if (inner.num_holes() + outer.num_holes() > 1) throw TypeError("series: a context may use the hole only once");
    if (inner.out_space() != outer.in_space())
        throw TypeError("series: interface mismatch '" + inner.out_space().name() + "' vs '" +
                        outer.in_space().name() + "'");
    if (outer.ball_in() > inner.ball_out() + kRenormLimit)
        throw TypeError("series: outer stage output ball exceeds inner stage input ball");
    auto node = std::make_shared<Node>();
    node->kind = Kind::Series;
    node->in_space = inner.in_space();
    node->out_space = outer.out_space();
    node->ball_in = inner.ball_in();
    node->ball_out = outer.ball_out();
    node->num_holes = inner.num_holes() + outer.num_holes();
    node->children = {std::move(inner), std::move(outer)};
    return CircuitExpr(std::move(node));
}

CircuitExpr CircuitExpr::parallel(CircuitExpr left, CircuitExpr right) {
    if (left.is_closed_value() || right.is_closed_value())
        throw TypeError("parallel: children must be open circuits");
    if (left.num_holes() + right.num_holes() > 1) throw TypeError("parallel: a context may use the hole only once");
    auto node = std::make_shared<Node>();
    node->kind = Kind::Parallel;
    node->in_space = product(left.in_space(), right.in_space());
    node->out_space = product(left.out_space(), right.out_space());
    node->ball_in = left.ball_in() + right.ball_in();
    node->ball_out = left.ball_out() + right.ball_out();
    node->num_holes = left.num_holes() + right.num_holes();
    node->children = {std::move(left), std::move(right)};
    return CircuitExpr(std::move(node));
}

CircuitExpr CircuitExpr::trace(CircuitExpr pre, FiniteSpace feedback_space, double feedback_radius,
                               std::optional<TraceConstants> declared) {
    if (pre.is_closed_value()) throw TypeError("trace: pre-trace circuit is already closed");
    if (pre.in_space() != pre.out_space())
        throw TypeError("trace: pre-trace circuit must be endo-typed, got '" + pre.in_space().name() + "' -> '" +
                        pre.out_space().name() + "'");
    if (pre.in_space() != feedback_space)
        throw TypeError("trace: feedback space '" + feedback_space.name() + "' does not match circuit type '" +
                        pre.in_space().name() + "'");
    if (feedback_radius <= 0.0) throw TypeError("trace: feedback radius must be positive");
    auto node = std::make_shared<Node>();
    node->kind = Kind::Trace;
    node->in_space = feedback_space;
    node->out_space = feedback_space;
    node->ball_in = pre.ball_in();
    node->ball_out = pre.ball_out();
    node->feedback_space = std::move(feedback_space);
    node->feedback_radius = feedback_radius;
    node->declared = declared;
    node->num_holes = pre.num_holes();
    node->closed_value = true;
    node->children = {std::move(pre)};
    return CircuitExpr(std::move(node));
}

const Transformer& CircuitExpr::leaf_transformer() const {
    if (node_->kind != Kind::Leaf) throw Error("leaf_transformer: not a leaf");
    return *node_->leaf;
}

const CircuitExpr& CircuitExpr::child(int i) const {
    return node_->children.at(static_cast<std::size_t>(i));
}

Transformer compose_transformers(const Transformer& inner, const Transformer& outer) {
    if (inner.out_space != outer.in_space)
        throw TypeError("compose_transformers: interface mismatch '" + inner.out_space.name() + "' vs '" +
                        outer.in_space.name() + "'");
    Eigen::VectorXd reward = inner.reward.values() + inner.gamma * (inner.trans.rows() * outer.reward.values());
    return Transformer(inner.in_space, outer.out_space, ValueFn(inner.in_space, std::move(reward)),
                       inner.gamma * outer.gamma, compose_kernels(inner.trans, outer.trans), inner.ball_in,
                       outer.ball_out);
}

Transformer tensor_transformers(const Transformer& left, const Transformer& right) {
    if (left.gamma != right.gamma)
        throw TypeError("tensor_transformers: parallel wiring requires a common discount");
    const FiniteSpace in = product(left.in_space, right.in_space);
    const FiniteSpace out = product(left.out_space, right.out_space);
    Eigen::VectorXd reward(in.size());
    for (Eigen::Index i = 0; i < left.in_space.size(); ++i)
        for (Eigen::Index j = 0; j < right.in_space.size(); ++j)
            reward(i * right.in_space.size() + j) = left.reward(i) + right.reward(j);
    return Transformer(in, out, ValueFn(in, std::move(reward)), left.gamma,
                       tensor_kernels(left.trans, right.trans), left.ball_in + right.ball_in,
                       left.ball_out + right.ball_out);
}

namespace {

// Exact trace constants of the duplicated feedback map (T z, T z) built
// from an affine endo transformer: the feedback block is gamma * P.
TraceConstants derived_trace_constants(const Transformer& t) {
    double row_sup = 0.0;
    for (Eigen::Index x = 0; x < t.trans.rows().rows(); ++x)
        row_sup = std::max(row_sup, t.trans.rows().row(x).lpNorm<1>());
    TraceConstants c;
    c.alpha_z = t.gamma * row_sup;
    c.beta_z = c.alpha_z;
    c.eta_z = 0.0;
    c.a_x = 0.0;
    return c;
}

TraceConstants resolve_trace_constants(const Transformer& pre, const std::optional<TraceConstants>& declared,
                                       const std::string& where) {
    const TraceConstants exact = derived_trace_constants(pre);
    if (!declared) {
        if (exact.alpha_z >= 1.0)
            throw UncertifiableTrace(where + ": derived feedback modulus " + std::to_string(exact.alpha_z) +
                                     " is not < 1");
        return exact;
    }
    const TraceConstants& d = *declared;
    if (d.alpha_z >= 1.0)
        throw UncertifiableTrace(where + ": declared alpha_z = " + std::to_string(d.alpha_z) + " is not < 1");
    // Declared constants must dominate the exact affine constants.
    const double slack = 1e-9;
    if (d.alpha_z + slack < exact.alpha_z || d.beta_z + slack < exact.beta_z || d.eta_z + slack < exact.eta_z ||
        d.a_x + slack < exact.a_x)
        throw UncertifiableTrace(where + ": declared trace constants are below the exact affine constants");
    return d;
}

Compiled compile_node(const CircuitExpr& c, double tol);

Transformer compile_open(const CircuitExpr& c, double tol) {
    Compiled r = compile_node(c, tol);
    if (r.is_value()) throw TypeError("compile: expected an open circuit");
    return std::move(*r.op);
}

Compiled compile_node(const CircuitExpr& c, double tol) {
    switch (c.kind()) {
        case CircuitExpr::Kind::Leaf:
            return Compiled{c.leaf_transformer(), std::nullopt};
        case CircuitExpr::Kind::Hole:
            throw TypeError("compile: circuit still has a hole");
        case CircuitExpr::Kind::Series:
            return Compiled{compose_transformers(compile_open(c.child(0), tol), compile_open(c.child(1), tol)),
                            std::nullopt};
        case CircuitExpr::Kind::Parallel:
            return Compiled{tensor_transformers(compile_open(c.child(0), tol), compile_open(c.child(1), tol)),
                            std::nullopt};
        case CircuitExpr::Kind::Trace: {
            const Transformer pre = compile_open(c.child(0), tol);
            const TraceConstants constants = resolve_trace_constants(pre, c.declared_constants(), "trace");
            // Duplicated feedback map (T z, T z); x is the empty wire.
            ParamFn step = [&pre](const Eigen::VectorXd&, const Eigen::VectorXd& z) -> Eigen::VectorXd {
                return pre.reward.values() + pre.gamma * (pre.trans.rows() * z);
            };
            TracedMap traced(step, step, 0, pre.in_space.size(), constants.alpha_z, 0.0, c.feedback_radius(), tol);
            Eigen::VectorXd v = traced(Eigen::VectorXd(0));
            return Compiled{std::nullopt, ValueFn(pre.in_space, std::move(v))};
        }
    }
    throw Error("compile: unreachable");
}

struct CertContext {
    std::optional<double> hole_lip;
};

NodeCert certify_node(const CircuitExpr& c, const CertContext& ctx, const std::string& path) {
    NodeCert cert;
    cert.path = path;
    cert.ball_in = c.ball_in();
    cert.ball_out = c.ball_out();
    cert.contains_hole = c.has_hole();
    switch (c.kind()) {
        case CircuitExpr::Kind::Leaf:
            cert.kind = "leaf";
            cert.lip = c.leaf_transformer().gamma;
            return cert;
        case CircuitExpr::Kind::Hole:
            cert.kind = "hole";
            if (!ctx.hole_lip)
                throw TypeError("certify: hole Lipschitz modulus required (supply the plugged component's gamma)");
            cert.lip = *ctx.hole_lip;
            cert.gain = 1.0;
            return cert;
        case CircuitExpr::Kind::Series: {
            cert.kind = "series";
            NodeCert inner = certify_node(c.child(0), ctx, path + ".first_step");
            NodeCert outer = certify_node(c.child(1), ctx, path + ".second_step");
            cert.lip = inner.lip * outer.lip;
            if (inner.contains_hole)
                cert.gain = inner.gain;  // right composition leaves the gain unchanged
            else if (outer.contains_hole)
                cert.gain = inner.lip * outer.gain;  // left composition multiplies by Lip(T0)
            cert.children = {std::move(inner), std::move(outer)};
            return cert;
        }
        case CircuitExpr::Kind::Parallel: {
            cert.kind = "parallel";
            NodeCert left = certify_node(c.child(0), ctx, path + ".left");
            NodeCert right = certify_node(c.child(1), ctx, path + ".right");
            cert.lip = std::max(left.lip, right.lip);
            if (left.contains_hole)
                cert.gain = left.gain;
            else if (right.contains_hole)
                cert.gain = right.gain;
            cert.children = {std::move(left), std::move(right)};
            return cert;
        }
        case CircuitExpr::Kind::Trace: {
            cert.kind = "trace";
            NodeCert pre = certify_node(c.child(0), ctx, path + ".pre");
            TraceConstants constants;
            if (c.declared_constants()) {
                constants = *c.declared_constants();
            } else {
                // Duplicated feedback map of the compiled pre circuit.
                constants.alpha_z = pre.lip;
                constants.beta_z = pre.lip;
                constants.eta_z = 0.0;
                constants.a_x = 0.0;
            }
            if (constants.alpha_z >= 1.0)
                throw UncertifiableTrace("certify: " + path + ": alpha_z = " + std::to_string(constants.alpha_z) +
                                         " is not < 1");
            const double external = constants.external_modulus();
            if (external >= 1.0)
                throw UncertifiableTrace("certify: " + path + ": external modulus " + std::to_string(external) +
                                         " is not < 1");
            cert.trace = constants;
            cert.lip = external;
            if (pre.contains_hole) cert.gain = constants.amplification() * pre.gain;
            cert.children = {std::move(pre)};
            return cert;
        }
    }
    throw Error("certify: unreachable");
}

}  // namespace

Compiled compile(const CircuitExpr& c, double tol) {
    if (c.has_hole()) throw TypeError("compile: circuit still has a hole");
    return compile_node(c, tol);
}

Certificate certify(const CircuitExpr& c, std::optional<double> hole_lip) {
    CertContext ctx{hole_lip};
    Certificate cert;
    cert.root = certify_node(c, ctx, "circuit");
    cert.gain = c.has_hole() ? cert.root.gain : 1.0;
    cert.modulus = cert.root.lip;
    return cert;
}

CircuitExpr plug(const CircuitExpr& c, const Transformer& t) {
    switch (c.kind()) {
        case CircuitExpr::Kind::Hole: {
            if (t.in_space != c.in_space() || t.out_space != c.out_space())
                throw TypeError("plug: component type does not match the hole");
            if (std::abs(t.ball_in - c.ball_in()) > kRenormLimit || std::abs(t.ball_out - c.ball_out()) > kRenormLimit)
                throw TypeError("plug: component invariant balls do not match the hole");
            if (t.reward.sup_norm() + t.gamma * t.ball_out > t.ball_in + kRenormLimit)
                throw TypeError("plug: component does not map its output ball into its input ball");
            return CircuitExpr::leaf(t);
        }
        case CircuitExpr::Kind::Leaf:
            return c;
        case CircuitExpr::Kind::Series:
            if (!c.has_hole()) return c;
            return CircuitExpr::series(plug(c.child(0), t), plug(c.child(1), t));
        case CircuitExpr::Kind::Parallel:
            if (!c.has_hole()) return c;
            return CircuitExpr::parallel(plug(c.child(0), t), plug(c.child(1), t));
        case CircuitExpr::Kind::Trace:
            if (!c.has_hole()) return c;
            return CircuitExpr::trace(plug(c.child(0), t), c.in_space(), c.feedback_radius(),
                                      c.declared_constants());
    }
    throw Error("plug: unreachable");
}

namespace {

// Closes a compiled circuit: traced circuits already carry their value,
// open endo circuits are closed through the unique fixed point.
ValueFn closed_value(const Compiled& compiled) {
    if (compiled.is_value()) return *compiled.value;
    if (!compiled.op->closed()) throw TypeError("congruence: context does not close the circuit");
    return solve_linear(*compiled.op);
}

}  // namespace

CongruenceReport congruence_bound(const CircuitExpr& c, const Transformer& t1, const Transformer& t2,
                                  double measured_eps) {
    if (!c.has_hole()) throw TypeError("congruence_bound: context has no hole");
    // Certified constants may differ between the two plugged circuits
    // (different hole moduli); combine by pairwise maximum.
    const Certificate c1 = certify(c, t1.gamma);
    const Certificate c2 = certify(c, t2.gamma);
    const double gain = std::max(c1.gain, c2.gain);
    const double modulus = std::max(c1.modulus, c2.modulus);
    if (modulus >= 1.0)
        throw UncertifiableTrace("congruence_bound: context modulus " + std::to_string(modulus) + " is not < 1");
    const ValueFn v1 = closed_value(compile(plug(c, t1)));
    const ValueFn v2 = closed_value(compile(plug(c, t2)));
    CongruenceReport report;
    report.eps = measured_eps;
    report.gain = gain;
    report.modulus = modulus;
    report.bound = gain / (1.0 - modulus) * measured_eps;
    report.measured = sup_norm_diff(v1, v2);
    if (report.measured > report.bound + kRenormLimit)
        throw Error("congruence_bound: measured gap " + std::to_string(report.measured) +
                    " exceeds certified bound " + std::to_string(report.bound));
    return report;
}

StabilityReport fixed_point_stability(const Transformer& t1, const Transformer& t2, double kappa) {
    if (!t1.closed() || !t2.closed()) throw TypeMismatch("fixed_point_stability: transformers must be closed");
    if (t1.in_space != t2.in_space) throw SpaceMismatch("fixed_point_stability: state spaces differ");
    if (kappa >= 1.0 || t1.gamma > kappa + kRenormLimit || t2.gamma > kappa + kRenormLimit)
        throw NonContraction("fixed_point_stability: contraction modulus must dominate both operators and be < 1");
    const double radius = std::min(t1.ball_out, t2.ball_out);
    StabilityReport report;
    report.distance = operator_distance(t1, t2, radius);
    report.bound = report.distance / (1.0 - kappa);
    report.measured = sup_norm_diff(solve_linear(t1), solve_linear(t2));
    if (report.measured > report.bound + kRenormLimit)
        throw Error("fixed_point_stability: measured gap exceeds bound");
    return report;
}

}  // namespace bellcirc
