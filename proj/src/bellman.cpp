#include "bellcirc/bellman.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>

#include "bellcirc/rng.hpp"

namespace bellcirc {

Transformer::Transformer(FiniteSpace in_space_, FiniteSpace out_space_, ValueFn reward_, double gamma_,
                         Kernel trans_, double ball_in_, double ball_out_)
    : in_space(std::move(in_space_)),
      out_space(std::move(out_space_)),
      reward(std::move(reward_)),
      gamma(gamma_),
      trans(std::move(trans_)),
      ball_in(ball_in_),
      ball_out(ball_out_) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error("Transformer: gamma must lie in (0,1)");
    if (reward.space() != in_space) throw SpaceMismatch("Transformer: reward space != input space");
    if (trans.from() != in_space || trans.to() != out_space)
        throw SpaceMismatch("Transformer: transition kernel spaces do not match declared type");
    if (ball_in < 0.0 || ball_out < 0.0) throw Error("Transformer: negative ball radius");
}

Transformer make_transformer(const Oddc& m, const Policy& pi) {
    const Kernel closed = close_loop(m, pi);
    const Eigen::Index nsp = m.s_out.size();
    const Eigen::Index nr = m.reward_space.size();
    Eigen::MatrixXd marginal(m.s_in.size(), nsp);
    for (Eigen::Index s = 0; s < m.s_in.size(); ++s)
        for (Eigen::Index sp = 0; sp < nsp; ++sp) marginal(s, sp) = closed.rows().row(s).segment(sp * nr, nr).sum();
    const double ball = m.v_max();
    return Transformer(m.s_in, m.s_out, expected_reward(m, pi), m.gamma, Kernel(m.s_in, m.s_out, std::move(marginal)),
                       ball, ball);
}

ValueFn apply(const Transformer& t, const ValueFn& v) {
    if (v.space() != t.out_space)
        throw SpaceMismatch("apply: value space '" + v.space().name() + "' != transformer output '" +
                            t.out_space.name() + "'");
    if (v.sup_norm() > t.ball_out + kRenormLimit)
        throw BallViolation("apply: ||v|| = " + std::to_string(v.sup_norm()) + " exceeds output ball " +
                            std::to_string(t.ball_out));
    Eigen::VectorXd out = t.reward.values() + t.gamma * (t.trans.rows() * v.values());
    return ValueFn(t.in_space, std::move(out), t.reward.sup_norm() + t.gamma * t.ball_out + kRenormLimit);
}

SolveResult solve_fixed_point(const Transformer& t, double tol,
                              const std::function<void(int, const ValueFn&)>& on_iterate) {
    if (!t.closed()) throw TypeMismatch("solve_fixed_point: open transformer (input space != output space)");
    if (t.gamma >= 1.0) throw NonContraction("solve_fixed_point: modulus >= 1");
    const double stop = tol * (1.0 - t.gamma);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(t.in_space.size());
    int iter = 0;
    const int max_iter = 1000000;
    while (true) {
        Eigen::VectorXd next = t.reward.values() + t.gamma * (t.trans.rows() * v);
        ++iter;
        const double residual = (next - v).lpNorm<Eigen::Infinity>();
        v = std::move(next);
        if (on_iterate) on_iterate(iter, ValueFn(t.in_space, v));
        if (residual <= stop) return {ValueFn(t.in_space, std::move(v)), iter, residual};
        if (iter >= max_iter) throw MaxIterExceeded("solve_fixed_point: no convergence in 1e6 iterations");
    }
}

ValueFn solve_linear(const Transformer& t) {
    if (!t.closed()) throw TypeMismatch("solve_linear: open transformer");
    const Eigen::Index n = t.in_space.size();
    const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - t.gamma * t.trans.rows();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
    // I - gamma P is strictly diagonally dominant for gamma < 1; a tiny
    // reciprocal condition estimate can only mean corrupted inputs.
    if (std::abs(lu.determinant()) < 1e-300) throw SingularSystem("solve_linear: singular system");
    Eigen::VectorXd v = lu.solve(t.reward.values());
    if (!v.allFinite()) throw SingularSystem("solve_linear: non-finite solution");
    return ValueFn(t.in_space, std::move(v));
}

int mc_horizon(double gamma, double v_max, double trunc_error) {
    if (v_max <= trunc_error) return 1;
    return static_cast<int>(std::ceil(std::log(trunc_error / v_max) / std::log(gamma))) + 1;
}

McEstimate monte_carlo_value(const Oddc& m, const Policy& pi, Eigen::Index s0, int horizon, int n_traj,
                             std::uint64_t seed) {
    const Kernel closed = close_loop(m, pi);
    const Eigen::Index ncols = closed.to().size();
    const Eigen::Index nr = m.reward_space.size();
    // Per-state cumulative rows for O(log n) inverse-CDF sampling.
    Eigen::MatrixXd cdf(closed.from().size(), ncols);
    for (Eigen::Index s = 0; s < closed.from().size(); ++s) {
        double acc = 0.0;
        for (Eigen::Index c = 0; c < ncols; ++c) {
            acc += closed(s, c);
            cdf(s, c) = acc;
        }
        cdf(s, ncols - 1) = 1.0;
    }
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < n_traj; ++i) {
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
        Eigen::Index s = s0;
        double ret = 0.0;
        double disc = 1.0;
        for (int step = 0; step < horizon; ++step) {
            const double u = rng.next_double();
            const double* row = cdf.data() + s;  // column-major stride access below
            Eigen::Index lo = 0, hi = ncols - 1;
            while (lo < hi) {
                const Eigen::Index mid = (lo + hi) / 2;
                if (row[mid * cdf.rows()] <= u)
                    lo = mid + 1;
                else
                    hi = mid;
            }
            const Eigen::Index col = lo;
            ret += disc * m.rho(col % nr);
            disc *= m.gamma;
            s = col / nr;
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    const double mean = sum / n_traj;
    const double var = std::max(0.0, sum_sq / n_traj - mean * mean);
    const double std_error = n_traj > 1 ? std::sqrt(var / (n_traj - 1)) : 0.0;
    return {mean, std_error, horizon, n_traj};
}

double operator_distance(const Transformer& t, const Transformer& u, double radius) {
    if (t.in_space != u.in_space || t.out_space != u.out_space)
        throw SpaceMismatch("operator_distance: transformer types differ");
    if (radius < 0.0) throw Error("operator_distance: negative radius");
    const Eigen::MatrixXd dlin = t.gamma * t.trans.rows() - u.gamma * u.trans.rows();
    const Eigen::VectorXd dr = t.reward.values() - u.reward.values();
    double best = 0.0;
    for (Eigen::Index x = 0; x < dr.size(); ++x)
        best = std::max(best, std::abs(dr(x)) + radius * dlin.row(x).lpNorm<1>());
    return best;
}

Mdp::Mdp(FiniteSpace states_, FiniteSpace actions_, Kernel trans_, Eigen::MatrixXd reward_, double gamma_,
         std::optional<double> declared_r_max)
    : states(std::move(states_)),
      actions(std::move(actions_)),
      trans(std::move(trans_)),
      reward(std::move(reward_)),
      gamma(gamma_) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error("Mdp: gamma must lie in (0,1)");
    if (trans.from() != product(states, actions) || trans.to() != states)
        throw SpaceMismatch("Mdp: transition kernel spaces do not match");
    if (reward.rows() != states.size() || reward.cols() != actions.size())
        throw SpaceMismatch("Mdp: reward table shape does not match spaces");
    if (!reward.allFinite()) throw Error("Mdp: non-finite reward entry");
    const double table_max = reward.size() == 0 ? 0.0 : reward.cwiseAbs().maxCoeff();
    r_max_declared = declared_r_max.has_value();
    if (declared_r_max) {
        if (*declared_r_max + kStochasticTol < table_max)
            throw Error("Mdp: declared reward bound is below the reward table maximum");
        r_max = *declared_r_max;
    } else {
        r_max = table_max;
    }
}

Transformer policy_transformer(const Mdp& m, const Policy& pi) {
    if (pi.state_space != m.states || pi.action_space != m.actions)
        throw SpaceMismatch("policy_transformer: policy spaces do not match MDP");
    const Eigen::Index ns = m.states.size();
    const Eigen::Index na = m.actions.size();
    Eigen::MatrixXd ptrans(ns, ns);
    Eigen::VectorXd r(ns);
    for (Eigen::Index s = 0; s < ns; ++s) {
        ptrans.row(s).setZero();
        double acc = 0.0;
        for (Eigen::Index a = 0; a < na; ++a) {
            ptrans.row(s) += pi.kernel(s, a) * m.trans.rows().row(s * na + a);
            acc += pi.kernel(s, a) * m.reward(s, a);
        }
        r(s) = acc;
    }
    const double ball = m.v_max();
    return Transformer(m.states, m.states, ValueFn(m.states, std::move(r)), m.gamma,
                       Kernel(m.states, m.states, std::move(ptrans)), ball, ball);
}

Oddc to_component(const Mdp& m) {
    // Reward signal = the (s,a) pair that produced it; rho reads the table.
    const FiniteSpace sig = product(m.states, m.actions);
    const FiniteSpace sa = product(m.states, m.actions);
    const FiniteSpace out = product(m.states, sig);
    const Eigen::Index na = m.actions.size();
    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(sa.size(), out.size());
    for (Eigen::Index s = 0; s < m.states.size(); ++s)
        for (Eigen::Index a = 0; a < na; ++a)
            for (Eigen::Index sp = 0; sp < m.states.size(); ++sp)
                rows(s * na + a, sp * sig.size() + (s * na + a)) = m.trans(s * na + a, sp);
    Eigen::VectorXd rho(sig.size());
    for (Eigen::Index s = 0; s < m.states.size(); ++s)
        for (Eigen::Index a = 0; a < na; ++a) rho(s * na + a) = m.reward(s, a);
    return Oddc(m.states, m.actions, m.states, sig, Kernel(sa, out, std::move(rows)), std::move(rho), m.gamma);
}

OptimalityOperator::OptimalityOperator(const Mdp& m) : space_(m.states), gamma_(m.gamma), ball_(m.v_max()) {
    const Eigen::Index na = m.actions.size();
    per_action_.reserve(static_cast<std::size_t>(na));
    for (Eigen::Index a = 0; a < na; ++a) {
        Eigen::MatrixXd ptrans(m.states.size(), m.states.size());
        for (Eigen::Index s = 0; s < m.states.size(); ++s) ptrans.row(s) = m.trans.rows().row(s * na + a);
        per_action_.emplace_back(m.states, m.states, ValueFn(m.states, m.reward.col(a)), m.gamma,
                                 Kernel(m.states, m.states, std::move(ptrans)), ball_, ball_);
    }
}

OptimalityOperator::OptimalityOperator(std::vector<Transformer> per_action)
    : space_(per_action.empty() ? throw Error("OptimalityOperator: needs at least one action")
                                : per_action.front().in_space),
      gamma_(per_action.front().gamma),
      ball_(per_action.front().ball_in),
      per_action_(std::move(per_action)) {
    for (const auto& t : per_action_) {
        if (!t.closed() || t.in_space != space_)
            throw SpaceMismatch("OptimalityOperator: per-action transformers must be closed on a common space");
        if (t.gamma != gamma_) throw TypeMismatch("OptimalityOperator: per-action discounts differ");
    }
}

ValueFn OptimalityOperator::apply(const ValueFn& v) const {
    Eigen::VectorXd best;
    bool first = true;
    for (const auto& t : per_action_) {
        Eigen::VectorXd backup = t.reward.values() + gamma_ * (t.trans.rows() * v.values());
        if (first) {
            best = std::move(backup);
            first = false;
        } else {
            best = best.cwiseMax(backup);
        }
    }
    return ValueFn(space_, std::move(best));
}

std::vector<Eigen::Index> OptimalityOperator::greedy(const ValueFn& v) const {
    std::vector<Eigen::Index> arg(static_cast<std::size_t>(space_.size()), 0);
    Eigen::VectorXd best;
    for (std::size_t a = 0; a < per_action_.size(); ++a) {
        Eigen::VectorXd backup =
            per_action_[a].reward.values() + gamma_ * (per_action_[a].trans.rows() * v.values());
        if (a == 0) {
            best = std::move(backup);
            continue;
        }
        for (Eigen::Index s = 0; s < space_.size(); ++s) {
            if (backup(s) > best(s)) {  // strict: ties stay at the lower index
                best(s) = backup(s);
                arg[static_cast<std::size_t>(s)] = static_cast<Eigen::Index>(a);
            }
        }
    }
    return arg;
}

std::pair<SolveResult, std::vector<Eigen::Index>> OptimalityOperator::solve(double tol) const {
    const double stop = tol * (1.0 - gamma_);
    ValueFn v = ValueFn::zero(space_);
    int iter = 0;
    const int max_iter = 1000000;
    double residual = 0.0;
    while (true) {
        ValueFn next = apply(v);
        ++iter;
        residual = sup_norm_diff(next, v);
        v = std::move(next);
        if (residual <= stop) break;
        if (iter >= max_iter) throw MaxIterExceeded("OptimalityOperator::solve: no convergence");
    }
    return {SolveResult{v, iter, residual}, greedy(v)};
}

}  // namespace bellcirc
