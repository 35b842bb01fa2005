#include "bellcirc/extensions.hpp"

#include <cmath>

#include "bellcirc/rng.hpp"

namespace bellcirc {

namespace {

Eigen::Index sample_index(Rng& rng, const Eigen::VectorXd& probs) {
    const double u = rng.next_double();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        acc += probs(i);
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

}  // namespace

Pomdp::Pomdp(FiniteSpace states_, FiniteSpace actions_, FiniteSpace observations_, Kernel trans_, Kernel obs_,
             Eigen::MatrixXd reward_, double gamma_, Dist init_belief_)
    : states(std::move(states_)),
      actions(std::move(actions_)),
      observations(std::move(observations_)),
      trans(std::move(trans_)),
      obs(std::move(obs_)),
      reward(std::move(reward_)),
      gamma(gamma_),
      init_belief(std::move(init_belief_)) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error("Pomdp: gamma must lie in (0,1)");
    if (trans.from() != product(states, actions) || trans.to() != states)
        throw SpaceMismatch("Pomdp: transition kernel spaces do not match");
    if (obs.from() != product(states, actions) || obs.to() != observations)
        throw SpaceMismatch("Pomdp: observation kernel spaces do not match");
    if (reward.rows() != states.size() || reward.cols() != actions.size())
        throw SpaceMismatch("Pomdp: reward table shape does not match spaces");
    if (init_belief.space() != states) throw SpaceMismatch("Pomdp: initial belief lives on the wrong space");
    if (!reward.allFinite()) throw Error("Pomdp: non-finite reward entry");
    r_max = reward.size() == 0 ? 0.0 : reward.cwiseAbs().maxCoeff();
}

BayesResult bayes_update(const Pomdp& p, const Dist& b, Eigen::Index a, Eigen::Index o) {
    if (b.space() != p.states) throw SpaceMismatch("bayes_update: belief lives on the wrong space");
    const Eigen::Index ns = p.states.size();
    const Eigen::Index na = p.actions.size();
    // Predicted next-state distribution, then weight by the observation likelihood.
    Eigen::VectorXd predicted = Eigen::VectorXd::Zero(ns);
    for (Eigen::Index s = 0; s < ns; ++s) {
        if (b(s) == 0.0) continue;
        predicted += b(s) * p.trans.rows().row(s * na + a).transpose();
    }
    Eigen::VectorXd joint(ns);
    for (Eigen::Index sp = 0; sp < ns; ++sp) joint(sp) = predicted(sp) * p.obs(sp * na + a, o);
    const double pred_prob = joint.sum();
    if (pred_prob <= 0.0) return {Dist::uniform(p.states), 0.0, true};
    return {Dist(p.states, joint / pred_prob), pred_prob, false};
}

BeliefTree belief_mdp_to_horizon(const Pomdp& p, int horizon, std::size_t max_nodes) {
    if (horizon < 0) throw Error("belief_mdp_to_horizon: negative horizon");
    BeliefTree tree;
    tree.horizon = horizon;
    tree.nodes.push_back(BeliefNode{p.init_belief, 0, {}, {}});
    const Eigen::Index na = p.actions.size();
    const Eigen::Index no = p.observations.size();
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        if (tree.nodes[i].depth >= horizon) continue;
        const Dist belief = tree.nodes[i].belief;
        const int depth = tree.nodes[i].depth;
        std::vector<double> lifted(static_cast<std::size_t>(na), 0.0);
        std::vector<std::vector<BeliefNode::Branch>> transitions(static_cast<std::size_t>(na));
        for (Eigen::Index a = 0; a < na; ++a) {
            double r = 0.0;
            for (Eigen::Index s = 0; s < p.states.size(); ++s) r += belief(s) * p.reward(s, a);
            lifted[static_cast<std::size_t>(a)] = r;
            for (Eigen::Index o = 0; o < no; ++o) {
                const BayesResult res = bayes_update(p, belief, a, o);
                if (res.zero_probability) continue;  // zero-mass branch, no value contribution
                if (tree.nodes.size() >= max_nodes)
                    throw BudgetExceeded("belief_mdp_to_horizon: node budget " + std::to_string(max_nodes) +
                                         " exceeded");
                tree.nodes.push_back(BeliefNode{res.posterior, depth + 1, {}, {}});
                transitions[static_cast<std::size_t>(a)].push_back(
                    BeliefNode::Branch{o, res.pred_prob, tree.nodes.size() - 1});
            }
        }
        tree.nodes[i].lifted_reward = std::move(lifted);
        tree.nodes[i].transitions = std::move(transitions);
    }
    return tree;
}

double belief_tree_value(const Pomdp& p, const BeliefTree& tree, const BeliefPolicy& policy) {
    std::vector<double> value(tree.nodes.size(), 0.0);
    for (std::size_t i = tree.nodes.size(); i-- > 0;) {
        const BeliefNode& node = tree.nodes[i];
        if (node.depth >= tree.horizon) continue;
        const Dist action_dist = policy(node.belief, node.depth);
        if (action_dist.space() != p.actions) throw SpaceMismatch("belief_tree_value: policy returned wrong space");
        double v = 0.0;
        for (Eigen::Index a = 0; a < p.actions.size(); ++a) {
            if (action_dist(a) == 0.0) continue;
            double cont = 0.0;
            for (const auto& br : node.transitions[static_cast<std::size_t>(a)])
                cont += br.probability * value[br.child];
            v += action_dist(a) * (node.lifted_reward[static_cast<std::size_t>(a)] + p.gamma * cont);
        }
        value[i] = v;
    }
    return value[0];
}

BeliefEquivalenceReport verify_belief_equivalence(const Pomdp& p, const BeliefPolicy& policy, int horizon,
                                                  int n_traj, std::uint64_t seed) {
    const BeliefTree tree = belief_mdp_to_horizon(p, horizon);
    const double tree_value = belief_tree_value(p, tree, policy);

    const Eigen::Index na = p.actions.size();
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < n_traj; ++i) {
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
        Eigen::Index s = sample_index(rng, p.init_belief.probs());
        Dist belief = p.init_belief;
        double ret = 0.0;
        double disc = 1.0;
        for (int t = 0; t < horizon; ++t) {
            const Dist action_dist = policy(belief, t);
            const Eigen::Index a = sample_index(rng, action_dist.probs());
            ret += disc * p.reward(s, a);
            disc *= p.gamma;
            const Eigen::Index sp = sample_index(rng, p.trans.rows().row(s * na + a).transpose());
            const Eigen::Index o = sample_index(rng, p.obs.rows().row(sp * na + a).transpose());
            belief = bayes_update(p, belief, a, o).posterior;
            s = sp;
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    const double mean = sum / n_traj;
    const double var = std::max(0.0, sum_sq / n_traj - mean * mean);
    const double std_error = n_traj > 1 ? std::sqrt(var / (n_traj - 1)) : 0.0;
    const double tolerance = 4.0 * std_error + std::pow(p.gamma, horizon) * p.v_max();
    BeliefEquivalenceReport report{tree_value, mean, std_error, tolerance,
                                   std::abs(mean - tree_value) <= tolerance};
    return report;
}

ImportanceWeights importance_weights(const TrajectoryPrefix& traj, const Policy& pi, const Policy& mu) {
    if (pi.state_space != mu.state_space || pi.action_space != mu.action_space)
        throw SpaceMismatch("importance_weights: policies live on different spaces");
    ImportanceWeights w;
    double cumulative = 1.0;
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
        const auto& step = traj.steps[t];
        const double p_target = pi.kernel(step.state, step.action);
        const double p_behavior = mu.kernel(step.state, step.action);
        if (p_behavior == 0.0) {
            if (p_target > 0.0)
                throw AbsoluteContinuityViolation(
                    "importance_weights: target needs action '" + pi.action_space.label(step.action) +
                    "' at state '" + pi.state_space.label(step.state) + "' (step " + std::to_string(t) +
                    ") but the behavior policy never takes it");
            w.per_step.push_back(0.0);  // prefix has zero mass under both laws
        } else {
            w.per_step.push_back(p_target / p_behavior);
        }
        cumulative *= w.per_step.back();
        w.cumulative.push_back(cumulative);
    }
    return w;
}

std::vector<WeightedPrefix> enumerate_prefixes(const Mdp& m, const Policy& behavior, const Dist& init, int horizon,
                                               std::size_t max_prefixes) {
    if (init.space() != m.states) throw SpaceMismatch("enumerate_prefixes: init distribution space mismatch");
    const Eigen::Index na = m.actions.size();
    std::vector<WeightedPrefix> result;
    // Depth-first expansion of all positive-probability prefixes.
    struct Frame {
        TrajectoryPrefix prefix;
        Eigen::Index state;
        double probability;
    };
    std::vector<Frame> stack;
    for (Eigen::Index s0 = 0; s0 < m.states.size(); ++s0)
        if (init(s0) > 0.0) stack.push_back(Frame{{}, s0, init(s0)});
    while (!stack.empty()) {
        Frame frame = std::move(stack.back());
        stack.pop_back();
        if (static_cast<int>(frame.prefix.steps.size()) == horizon) {
            result.push_back(WeightedPrefix{std::move(frame.prefix), frame.probability});
            if (result.size() > max_prefixes) throw BudgetExceeded("enumerate_prefixes: prefix budget exceeded");
            continue;
        }
        for (Eigen::Index a = 0; a < na; ++a) {
            const double pa = behavior.kernel(frame.state, a);
            if (pa == 0.0) continue;
            for (Eigen::Index sp = 0; sp < m.states.size(); ++sp) {
                const double pt = m.trans(frame.state * na + a, sp);
                if (pt == 0.0) continue;
                Frame next = frame;
                next.prefix.steps.push_back(
                    TrajectoryPrefix::Step{frame.state, a, m.reward(frame.state, a), sp});
                next.state = sp;
                next.probability = frame.probability * pa * pt;
                stack.push_back(std::move(next));
            }
        }
    }
    return result;
}

FactorizationReport factorized_weights(const Mdp& m1, const Mdp& m2, const Policy& pi1, const Policy& mu1,
                                       const Policy& pi2, const Policy& mu2, const Dist& init1, const Dist& init2,
                                       int horizon) {
    const auto prefixes1 = enumerate_prefixes(m1, mu1, init1, horizon);
    const auto prefixes2 = enumerate_prefixes(m2, mu2, init2, horizon);

    FactorizationReport report{};
    report.max_factorization_gap = 0.0;
    // Global weights on the product system versus per-module products.
    double second_moment_product = 0.0;
    for (const auto& p1 : prefixes1) {
        const double w1 =
            p1.prefix.steps.empty() ? 1.0 : importance_weights(p1.prefix, pi1, mu1).cumulative.back();
        for (const auto& p2 : prefixes2) {
            const double w2 = p2.prefix.steps.empty() ? 1.0 : importance_weights(p2.prefix, pi2, mu2).cumulative.back();
            // Product policy ratio per step equals the per-module product.
            double w_global = 1.0;
            for (std::size_t t = 0; t < p1.prefix.steps.size(); ++t) {
                const auto& s1 = p1.prefix.steps[t];
                const auto& s2 = p2.prefix.steps[t];
                const double target = pi1.kernel(s1.state, s1.action) * pi2.kernel(s2.state, s2.action);
                const double behavior = mu1.kernel(s1.state, s1.action) * mu2.kernel(s2.state, s2.action);
                if (behavior == 0.0)
                    throw AbsoluteContinuityViolation("factorized_weights: zero behavior mass on enumerated prefix");
                w_global *= target / behavior;
            }
            const double rel = std::abs(w_global - w1 * w2) / std::max(1.0, std::abs(w_global));
            report.max_factorization_gap = std::max(report.max_factorization_gap, rel);
            second_moment_product += p1.probability * p2.probability * w_global * w_global;
        }
    }
    auto second_moment = [](const std::vector<WeightedPrefix>& prefixes, const Policy& pi, const Policy& mu) {
        double acc = 0.0;
        for (const auto& p : prefixes) {
            const double w = p.prefix.steps.empty() ? 1.0 : importance_weights(p.prefix, pi, mu).cumulative.back();
            acc += p.probability * w * w;
        }
        return acc;
    };
    const double sm1 = second_moment(prefixes1, pi1, mu1);
    const double sm2 = second_moment(prefixes2, pi2, mu2);
    report.log_second_moment_product = std::log(second_moment_product);
    report.log_second_moments = {std::log(sm1), std::log(sm2)};
    report.log_additivity_gap = std::abs(report.log_second_moment_product - std::log(sm1) - std::log(sm2));
    report.pass = report.max_factorization_gap <= 1e-12 && report.log_additivity_gap <= 1e-12;
    return report;
}

SeriesChainRuleReport series_chain_rule_check(const Mdp& m1, const Mdp& m2, const Policy& pi1, const Policy& mu1,
                                              const Policy& pi2, const Policy& mu2, const Dist& init1,
                                              const Dist& init2, int horizon) {
    // Interface-decomposed joint system: state (u, d); the upstream step
    // produces u', and the downstream transition is keyed by the realized
    // interface u' rather than by d. Policies act on their own coordinates,
    // so the prefix law decomposes along the interface and the global
    // likelihood ratio must equal the chain-rule product.
    if (m1.states != m2.states)
        throw SpaceMismatch("series_chain_rule_check: modules must share the interface space");
    const Eigen::Index na1 = m1.actions.size();
    const Eigen::Index na2 = m2.actions.size();
    struct Frame {
        Eigen::Index u, d;
        double probability;
        double w_global, w_up, w_down;
        int depth;
    };
    SeriesChainRuleReport report{0.0, true};
    std::vector<Frame> stack;
    std::size_t expanded = 0;
    for (Eigen::Index u0 = 0; u0 < m1.states.size(); ++u0)
        for (Eigen::Index d0 = 0; d0 < m2.states.size(); ++d0)
            if (init1(u0) > 0.0 && init2(d0) > 0.0)
                stack.push_back(Frame{u0, d0, init1(u0) * init2(d0), 1.0, 1.0, 1.0, 0});
    while (!stack.empty()) {
        Frame f = stack.back();
        stack.pop_back();
        if (f.depth == horizon) {
            const double rel = std::abs(f.w_global - f.w_up * f.w_down) / std::max(1.0, std::abs(f.w_global));
            report.max_gap = std::max(report.max_gap, rel);
            continue;
        }
        if (++expanded > 2000000) throw BudgetExceeded("series_chain_rule_check: enumeration budget exceeded");
        for (Eigen::Index a1 = 0; a1 < na1; ++a1) {
            const double mu_a1 = mu1.kernel(f.u, a1);
            if (mu_a1 == 0.0) continue;
            for (Eigen::Index a2 = 0; a2 < na2; ++a2) {
                const double mu_a2 = mu2.kernel(f.d, a2);
                if (mu_a2 == 0.0) continue;
                const double step_target = pi1.kernel(f.u, a1) * pi2.kernel(f.d, a2);
                const double step_behavior = mu_a1 * mu_a2;
                for (Eigen::Index up = 0; up < m1.states.size(); ++up) {
                    const double p_up = m1.trans(f.u * na1 + a1, up);
                    if (p_up == 0.0) continue;
                    for (Eigen::Index dp = 0; dp < m2.states.size(); ++dp) {
                        const double p_down = m2.trans(up * na2 + a2, dp);  // keyed by the interface
                        if (p_down == 0.0) continue;
                        Frame next = f;
                        next.probability *= step_behavior * p_up * p_down;
                        next.w_global *= step_target / step_behavior;
                        next.w_up *= pi1.kernel(f.u, a1) / mu_a1;
                        next.w_down *= pi2.kernel(f.d, a2) / mu_a2;
                        next.u = up;
                        next.d = dp;
                        next.depth = f.depth + 1;
                        stack.push_back(next);
                    }
                }
            }
        }
    }
    report.pass = report.max_gap <= 1e-12;
    return report;
}

ChangeOfMeasureReport change_of_measure_check(const Mdp& m, const Policy& pi, const Policy& mu, const Dist& init,
                                              int horizon, std::uint64_t seed) {
    Eigen::MatrixXd table = m.reward;
    if (seed != 0) {
        Rng rng(seed);
        for (Eigen::Index s = 0; s < table.rows(); ++s)
            for (Eigen::Index a = 0; a < table.cols(); ++a) table(s, a) = rng.uniform(-1.0, 1.0);
    }
    auto g = [&](const TrajectoryPrefix& prefix) {
        double acc = 0.0;
        double disc = 1.0;
        for (const auto& step : prefix.steps) {
            acc += disc * table(step.state, step.action);
            disc *= m.gamma;
        }
        return acc;
    };
    ChangeOfMeasureReport report{};
    for (const auto& wp : enumerate_prefixes(m, mu, init, horizon)) {
        const double w = wp.prefix.steps.empty() ? 1.0 : importance_weights(wp.prefix, pi, mu).cumulative.back();
        report.martingale_expectation += wp.probability * w;
        report.reweighted_expectation += wp.probability * w * g(wp.prefix);
    }
    for (const auto& wp : enumerate_prefixes(m, pi, init, horizon))
        report.target_expectation += wp.probability * g(wp.prefix);
    report.martingale_gap = std::abs(report.martingale_expectation - 1.0);
    report.identity_gap = std::abs(report.reweighted_expectation - report.target_expectation);
    report.pass = report.martingale_gap <= 1e-12 && report.identity_gap <= 1e-12;
    return report;
}

TrackingReport track_fixed_points(const std::vector<Transformer>& ops, TrackingMode mode) {
    if (ops.size() < 2) throw Error("track_fixed_points: need at least two operators");
    const FiniteSpace& space = ops.front().in_space;
    const double gamma = ops.front().gamma;
    const double radius = ops.front().ball_in;
    for (const auto& t : ops) {
        if (!t.closed() || t.in_space != space) throw SpaceMismatch("track_fixed_points: operators must share a space");
        if (t.gamma != gamma) throw TypeMismatch("track_fixed_points: operators must share the discount");
        if (std::abs(t.ball_in - radius) > kRenormLimit)
            throw TypeMismatch("track_fixed_points: operators must share the invariant ball");
    }

    TrackingReport report{};
    report.pass = true;
    for (std::size_t t = 0; t + 1 < ops.size(); ++t) {
        report.drift.push_back(operator_distance(ops[t + 1], ops[t], radius));
        report.step_bound.push_back(report.drift.back() / (1.0 - gamma));
    }

    std::vector<ValueFn> stars;
    stars.reserve(ops.size());
    for (const auto& t : ops) stars.push_back(solve_linear(t));

    if (mode == TrackingMode::Exact) {
        for (std::size_t t = 0; t + 1 < ops.size(); ++t) {
            report.step_gap.push_back(sup_norm_diff(stars[t + 1], stars[t]));
            if (report.step_gap.back() > report.step_bound[t] + kRenormLimit) report.pass = false;
        }
        report.cumulative_gap = sup_norm_diff(stars.back(), stars.front());
        report.cumulative_bound = 0.0;
        for (double b : report.step_bound) report.cumulative_bound += b;
        if (report.cumulative_gap > report.cumulative_bound + kRenormLimit) report.pass = false;
    } else {
        ValueFn v = ValueFn::zero(space);
        double e = sup_norm_diff(v, stars.front());
        report.iterate_error.push_back(e);
        report.iterate_bound.push_back(e);
        for (std::size_t t = 0; t + 1 < ops.size(); ++t) {
            v = apply(ops[t], v);
            const double err = sup_norm_diff(v, stars[t + 1]);
            const double recursion = gamma * report.iterate_error.back() + report.step_bound[t];
            report.iterate_error.push_back(err);
            report.iterate_bound.push_back(recursion);
            if (err > recursion + kRenormLimit) report.pass = false;
        }
    }
    return report;
}

}  // namespace bellcirc
