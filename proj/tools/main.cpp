#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "bellcirc/docio.hpp"
#include "bellcirc/generators.hpp"
#include "bellcirc/robustness.hpp"

namespace {

using namespace bellcirc;

struct GlobalFlags {
    double tol = 1e-10;
    double slack = 1e-9;
    double mc_sigma = 4.0;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out_path;
    int jobs = 1;
};

std::uint64_t default_seed() {
    if (const char* env = std::getenv("BELLCIRC_SEED")) return std::strtoull(env, nullptr, 10);
    return 20240901ULL;
}

Report make_report(const std::string& command, const Document& doc, const GlobalFlags& flags) {
    Report r;
    r.command = command;
    r.input = doc.origin();
    r.digest = doc.digest();
    r.seed = flags.seed_given ? flags.seed : default_seed();
    r.tol = flags.tol;
    r.slack = flags.slack;
    r.mc_sigma = flags.mc_sigma;
    return r;
}

// Wall time goes to stderr only: rendered reports stay byte-identical for
// identical inputs.
std::chrono::steady_clock::time_point g_start = std::chrono::steady_clock::now();

int finish(const Report& report, const GlobalFlags& flags) {
    std::cout << report.render_text();
    std::cerr << "wall time: "
              << std::chrono::duration<double>(std::chrono::steady_clock::now() - g_start).count() << " s\n";
    if (!flags.out_path.empty()) {
        std::ofstream out(flags.out_path, std::ios::binary);
        if (!out) {
            std::cerr << "cannot write report to " << flags.out_path << "\n";
            return 2;
        }
        out << report.render_json();
    }
    if (report.all_pass()) return 0;
    std::cerr << "FAILED checks:";
    for (const auto& name : report.failing()) std::cerr << " " << name;
    std::cerr << "\n";
    return 1;
}

void cmd_solve(const Document& doc, const GlobalFlags& flags, const std::vector<std::string>& methods,
               Report& report) {
    const Compiled compiled = compile(doc.circuit(), flags.tol);
    if (compiled.is_value()) {
        const ValueFn& v = *compiled.value;
        for (Eigen::Index i = 0; i < v.size(); ++i)
            report.add_line("state " + v.space().label(i) + ": " + fmt_num(v(i)));
        report.add_check("traced_value", std::nullopt, std::nullopt, true);
        return;
    }
    const Transformer& op = *compiled.op;
    if (!op.closed()) throw TypeMismatch(doc.origin() + ": circuit is open; solving needs a closed loop");

    std::optional<ValueFn> vi_value;
    std::optional<ValueFn> linear_value;
    for (const auto& method : methods) {
        if (method == "vi") {
            const SolveResult res = solve_fixed_point(op, flags.tol);
            vi_value = res.value;
            report.add_line("method vi: iterations " + std::to_string(res.iterations) + ", residual " +
                            fmt_num(res.residual));
            report.add_check("vi_residual", flags.tol * (1.0 - op.gamma), res.residual,
                             res.residual <= flags.tol * (1.0 - op.gamma));
        } else if (method == "linear") {
            linear_value = solve_linear(op);
            const double residual =
                (linear_value->values() - (op.reward.values() + op.gamma * (op.trans.rows() * linear_value->values())))
                    .lpNorm<Eigen::Infinity>();
            report.add_line("method linear: residual " + fmt_num(residual));
            report.add_check("linear_residual", 1e-10, residual, residual <= 1e-10);
        } else {
            throw ParseError("unknown method '" + method + "' (expected vi, linear, mc)");
        }
    }
    if (!vi_value && !linear_value) throw ParseError("solve: no direct method requested (vi or linear)");
    const ValueFn& printed = linear_value ? *linear_value : *vi_value;
    for (Eigen::Index i = 0; i < printed.size(); ++i)
        report.add_line("state " + printed.space().label(i) + ": " + fmt_num(printed(i)));
    if (vi_value && linear_value) {
        const double gap = sup_norm_diff(*vi_value, *linear_value);
        report.add_check("vi_vs_linear", flags.tol, gap, gap <= flags.tol);
    }
}

// Monte Carlo cross-check for leaf circuits declared via component+policy.
void cmd_solve_mc(const Document& doc, const GlobalFlags& flags, const std::string& component_name,
                  const std::string& policy_name, Report& report) {
    const Oddc& m = doc.component(component_name);
    const Policy& pi = doc.policy(policy_name);
    const SolveSection& s = *doc.solve_section();
    const auto idx = m.s_in.index_of(s.state);
    if (!idx) throw ParseError(doc.origin() + ": unknown start state '" + s.state + "'");
    const Transformer op = make_transformer(m, pi);
    const ValueFn exact = solve_linear(op);
    const int horizon = mc_horizon(m.gamma, m.v_max(), s.trunc_error);
    const McEstimate mc = monte_carlo_value(m, pi, *idx, horizon, s.n_traj, report.seed);
    report.add_line("method mc: mean " + fmt_num(mc.mean) + ", std_error " + fmt_num(mc.std_error) + ", horizon " +
                    std::to_string(mc.horizon));
    const double tolerance = flags.mc_sigma * mc.std_error + s.trunc_error;
    const double gap = std::abs(mc.mean - exact(*idx));
    report.add_check("mc_vs_linear", tolerance, gap, gap <= tolerance);
}

void cmd_certify(const Document& doc, const GlobalFlags& flags, Report& report) {
    const CircuitExpr& context = doc.context();
    if (doc.candidates().size() != 2)
        throw ParseError(doc.origin() + ": certify needs exactly two candidate transformers");
    const Transformer& t1 = doc.transformer(doc.candidates()[0]);
    const Transformer& t2 = doc.transformer(doc.candidates()[1]);

    // Per-node constants from the candidate-independent walk.
    const Certificate cert = certify(context, std::max(t1.gamma, t2.gamma));
    std::function<void(const NodeCert&)> describe = [&](const NodeCert& n) {
        std::string line = "node " + n.path + " [" + n.kind + "]: lip=" + fmt_num(n.lip);
        if (n.contains_hole) line += " gain=" + fmt_num(n.gain);
        if (n.trace)
            line += " alpha_z=" + fmt_num(n.trace->alpha_z) + " beta_z=" + fmt_num(n.trace->beta_z) +
                    " eta_z=" + fmt_num(n.trace->eta_z) + " a_x=" + fmt_num(n.trace->a_x);
        report.add_line(line);
        for (const auto& c : n.children) describe(c);
    };
    describe(cert.root);
    report.add_line("L(C) = " + fmt_num(cert.gain));
    report.add_line("kappa(C) = " + fmt_num(cert.modulus));

    const double eps = operator_distance(t1, t2, t1.ball_out);
    report.add_line("eps = " + fmt_num(eps));
    const CongruenceReport congruence = congruence_bound(context, t1, t2, eps);
    report.add_check("congruence", congruence.bound, congruence.measured,
                     congruence.measured <= congruence.bound + flags.slack);
}

void cmd_contract(const Document& doc, const GlobalFlags& flags, Report& report) {
    if (!doc.contract_section()) throw ParseError(doc.origin() + ": document has no contract section");
    const ContractSection& section = *doc.contract_section();
    const LfpResult lfp = kleene_lfp(section.transformer, flags.tol);
    for (Eigen::Index i = 0; i < lfp.value.size(); ++i) {
        const Cost& c = lfp.value(i);
        report.add_line("lfp " + section.transformer.in_space.label(i) + ": " +
                        (c.is_infinite() ? "inf" : fmt_num(c.finite_value())));
    }
    report.add_line("kleene iterations: " + std::to_string(lfp.iterations));
    if (section.candidate) {
        const PrefixedCheck check = check_prefixed(section.transformer, *section.candidate, flags.tol);
        report.add_check("prefixed_point", std::nullopt, std::nullopt, check.holds);
        if (!check.holds)
            report.add_line("violating state: " + section.transformer.in_space.label(check.witness));
    }
}

void cmd_abstraction(const Document& doc, const GlobalFlags& flags, Report& report) {
    if (!doc.abstraction_section()) throw ParseError(doc.origin() + ": document has no abstraction section");
    const AbstractionSection& section = *doc.abstraction_section();
    const Mismatch mm = measure_mismatch(section.concrete, section.abstract_mdp, section.phi);
    report.add_line("eps_r = " + fmt_num(mm.eps_r) + ", eps_P = " + fmt_num(mm.eps_P));
    HomReport hom;
    if (section.mode == "exact") {
        hom = verify_exact_hom(section.concrete, section.abstract_mdp, section.phi, section.pihat, report.seed);
        report.add_check("intertwining", 1e-10, hom.intertwining_residual, hom.intertwining_residual <= 1e-10);
        report.add_check("value_gap", 1e-8, hom.measured_gap, hom.measured_gap <= 1e-8);
    } else if (section.mode == "optimal") {
        hom = verify_exact_hom_optimal(section.concrete, section.abstract_mdp, section.phi, report.seed);
        report.add_check("optimality_intertwining", 1e-10, hom.intertwining_residual,
                         hom.intertwining_residual <= 1e-10);
        report.add_check("optimal_value_gap", 1e-8, hom.measured_gap, hom.measured_gap <= 1e-8);
    } else {
        hom = verify_approx_hom(section.concrete, section.abstract_mdp, section.phi, section.pihat);
        report.add_check("distortion_bound", hom.bound, hom.measured_gap,
                         hom.measured_gap <= hom.bound + flags.slack);
    }
}

void cmd_belief(const Document& doc, const GlobalFlags&, Report& report) {
    if (!doc.belief_section()) throw ParseError(doc.origin() + ": document has no pomdp section");
    const BeliefSection& section = *doc.belief_section();
    BeliefPolicy policy;
    if (section.policy == "uniform") {
        const FiniteSpace actions = section.pomdp.actions;
        policy = [actions](const Dist&, int) { return Dist::uniform(actions); };
    } else if (section.policy.rfind("fixed:", 0) == 0) {
        const std::string label = section.policy.substr(6);
        const auto idx = section.pomdp.actions.index_of(label);
        if (!idx) throw ParseError(doc.origin() + ": unknown action '" + label + "' in pomdp.policy");
        const FiniteSpace actions = section.pomdp.actions;
        const Eigen::Index a = *idx;
        policy = [actions, a](const Dist&, int) { return Dist::point_mass(actions, a); };
    } else {
        throw ParseError(doc.origin() + ": pomdp.policy must be 'uniform' or 'fixed:<action>'");
    }
    const BeliefEquivalenceReport r =
        verify_belief_equivalence(section.pomdp, policy, section.horizon, section.n_traj, report.seed);
    report.add_line("belief tree value: " + fmt_num(r.tree_value));
    report.add_line("pomdp mc value: " + fmt_num(r.mc_mean) + " (std_error " + fmt_num(r.mc_std_error) + ")");
    report.add_check("belief_equivalence", r.tolerance, std::abs(r.mc_mean - r.tree_value), r.pass);
}

void cmd_ope(const Document& doc, const GlobalFlags& flags, Report& report) {
    if (!doc.ope_section()) throw ParseError(doc.origin() + ": document has no ope section");
    const OpeSection& section = *doc.ope_section();
    const ChangeOfMeasureReport r = change_of_measure_check(section.mdp, section.target, section.behavior,
                                                            section.init, section.horizon, report.seed);
    report.add_line("E_mu[W] = " + fmt_num(r.martingale_expectation));
    report.add_check("martingale", 1e-12, r.martingale_gap, r.martingale_gap <= 1e-12);
    report.add_check("change_of_measure", 1e-12, r.identity_gap, r.identity_gap <= 1e-12);
    (void)flags;
}

void cmd_track(const Document& doc, const GlobalFlags& flags, Report& report) {
    if (!doc.track_section()) throw ParseError(doc.origin() + ": document has no track section");
    const TrackSection& section = *doc.track_section();
    const TrackingReport r = track_fixed_points(section.ops, section.mode);
    for (std::size_t t = 0; t < r.drift.size(); ++t)
        report.add_line("eta_" + std::to_string(t) + " = " + fmt_num(r.drift[t]));
    if (section.mode == TrackingMode::Exact) {
        bool step_ok = true;
        double worst_gap = 0.0, worst_bound = 0.0;
        for (std::size_t t = 0; t < r.step_gap.size(); ++t) {
            if (r.step_gap[t] > r.step_bound[t] + flags.slack) step_ok = false;
            if (r.step_gap[t] > worst_gap) {
                worst_gap = r.step_gap[t];
                worst_bound = r.step_bound[t];
            }
        }
        report.add_check("per_step_drift", worst_bound, worst_gap, step_ok);
        report.add_check("cumulative_drift", r.cumulative_bound, r.cumulative_gap,
                         r.cumulative_gap <= r.cumulative_bound + flags.slack);
    } else {
        bool ok = true;
        for (std::size_t t = 0; t < r.iterate_error.size(); ++t)
            if (r.iterate_error[t] > r.iterate_bound[t] + flags.slack) ok = false;
        report.add_check("iterate_tracking", std::nullopt, std::nullopt, ok);
    }
}

int cmd_example(const std::string& name, const GlobalFlags& flags) {
    Report report;
    report.command = "example";
    report.input = name;
    report.digest = fnv1a_digest(name);
    report.seed = flags.seed_given ? flags.seed : default_seed();
    report.tol = flags.tol;
    report.slack = flags.slack;
    report.mc_sigma = flags.mc_sigma;

    if (name == "parallel_factorization") {
        const Oddc m1 = random_component("p1", 4, 2, 4, 3, 0.8, 1.0, Rng::derive(report.seed, 1));
        const Oddc m2 = random_component("p2", 3, 2, 3, 3, 0.8, 1.0, Rng::derive(report.seed, 2));
        const Policy pi1 = random_policy(m1.s_in, m1.actions, Rng::derive(report.seed, 3));
        const Policy pi2 = random_policy(m2.s_in, m2.actions, Rng::derive(report.seed, 4));
        const ParallelFactorizationReport r = run_parallel_factorization(m1, m2, pi1, pi2, report.seed);
        report.add_line("factor values at first states: " + fmt_num(r.factor_value_1) + ", " +
                        fmt_num(r.factor_value_2));
        report.add_line("product value at paired state: " + fmt_num(r.product_value));
        report.add_check("additive_factorization", 1e-8, r.max_additivity_gap, r.max_additivity_gap <= 1e-8);
        report.add_check("coupled_negative_control", std::nullopt, r.coupled_gap, r.coupled_gap > 1e-6);
    } else if (name == "two_module_robustness") {
        const FiniteSpace s = make_space("S", 3);
        const FiniteSpace u = make_space("U", 3);
        const Transformer t1 = random_transformer(s, u, 0.5, 1.0, Rng::derive(report.seed, 11));
        const Transformer t2 = random_transformer(u, s, 0.5, 1.0, Rng::derive(report.seed, 12));
        PerturbationSpec spec;
        spec.target_module = 1;
        spec.eps_r = 0.1;
        spec.eps_P = 0.0;
        spec.seed = report.seed;
        const RobustnessChainReport r = run_two_module_robustness(t1, t2, spec);
        report.add_line("local eps (formula): " + fmt_num(r.eps_formula_1) + ", " + fmt_num(r.eps_formula_2));
        report.add_line("local eps (exact): " + fmt_num(r.eps_exact_1) + ", " + fmt_num(r.eps_exact_2));
        report.add_check("local_formula_dominates", r.eps_formula_2, r.eps_exact_2,
                         r.eps_exact_2 <= r.eps_formula_2 + flags.slack);
        report.add_check("macro_mismatch", r.macro_bound, r.macro_exact, r.macro_exact <= r.macro_bound + flags.slack);
        report.add_check("fixed_point_gap", r.value_bound, r.value_gap, r.value_gap <= r.value_bound + flags.slack);
        report.add_line("certified fixed-point bound: " + fmt_num(r.value_bound));
    } else {
        std::cerr << "unknown example '" << name << "' (expected parallel_factorization or two_module_robustness)\n";
        return 2;
    }
    return finish(report, flags);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bellcirc: compositional solvers and certified bounds for discounted decision circuits"};
    app.require_subcommand(1);

    GlobalFlags flags;
    std::string file;
    std::vector<std::string> methods{"vi", "linear"};
    std::string example_name;
    std::string mc_component, mc_policy;

    auto add_common = [&](CLI::App* sub, bool needs_file) {
        if (needs_file) sub->add_option("file", file, "scenario document (JSON)")->required();
        sub->add_option("--tol", flags.tol, "solver tolerance");
        sub->add_option("--slack", flags.slack, "assertion slack for certified bounds");
        sub->add_option("--mc-sigma", flags.mc_sigma, "Monte Carlo agreement width in standard errors");
        sub->add_option("--seed", flags.seed, "RNG seed (default: BELLCIRC_SEED or 20240901)")
            ->each([&](const std::string&) { flags.seed_given = true; });
        sub->add_option("--out", flags.out_path, "write a structured JSON report here");
        sub->add_option("--jobs", flags.jobs, "audit parallelism (results are thread-count independent)");
    };

    CLI::App* solve = app.add_subcommand("solve", "solve a closed circuit fixed point");
    add_common(solve, true);
    solve->add_option("--method", methods, "vi, linear, mc (repeatable)")->delimiter(',');
    solve->add_option("--mc-component", mc_component, "component name for the mc method");
    solve->add_option("--mc-policy", mc_policy, "policy name for the mc method");

    CLI::App* certify_cmd = app.add_subcommand("certify", "certify a one-hole context and audit the congruence bound");
    add_common(certify_cmd, true);
    CLI::App* contract_cmd = app.add_subcommand("contract", "least fixed point and inductive contract checks");
    add_common(contract_cmd, true);
    CLI::App* abstraction_cmd = app.add_subcommand("abstraction", "homomorphism mismatch and distortion bounds");
    add_common(abstraction_cmd, true);
    CLI::App* belief_cmd = app.add_subcommand("belief", "belief-state lifting equivalence audit");
    add_common(belief_cmd, true);
    CLI::App* ope_cmd = app.add_subcommand("ope", "importance-weight identities on enumerated prefixes");
    add_common(ope_cmd, true);
    CLI::App* track_cmd = app.add_subcommand("track", "fixed-point tracking bounds for drifting operators");
    add_common(track_cmd, true);
    CLI::App* example_cmd = app.add_subcommand("example", "run a packaged end-to-end scenario");
    example_cmd->add_option("name", example_name, "parallel_factorization | two_module_robustness")->required();
    add_common(example_cmd, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (example_cmd->parsed()) return cmd_example(example_name, flags);

        const Document doc = Document::load(file);
        Report report = make_report(app.get_subcommands().front()->get_name(), doc, flags);
        if (solve->parsed()) {
            bool wants_mc = false;
            for (const auto& m : methods) wants_mc |= (m == "mc");
            std::vector<std::string> rest;
            for (const auto& m : methods)
                if (m != "mc") rest.push_back(m);
            cmd_solve(doc, flags, rest, report);
            if (wants_mc) {
                if (mc_component.empty() || mc_policy.empty())
                    throw ParseError("mc method needs --mc-component and --mc-policy");
                cmd_solve_mc(doc, flags, mc_component, mc_policy, report);
            }
        } else if (certify_cmd->parsed()) {
            cmd_certify(doc, flags, report);
        } else if (contract_cmd->parsed()) {
            cmd_contract(doc, flags, report);
        } else if (abstraction_cmd->parsed()) {
            cmd_abstraction(doc, flags, report);
        } else if (belief_cmd->parsed()) {
            cmd_belief(doc, flags, report);
        } else if (ope_cmd->parsed()) {
            cmd_ope(doc, flags, report);
        } else if (track_cmd->parsed()) {
            cmd_track(doc, flags, report);
        }
        return finish(report, flags);
    } catch (const UncertifiableTrace& e) {
        // Certification failures are reported as a failing check, not a crash.
        std::cout << "check certificate: FAIL\n" << e.what() << "\nRESULT: FAIL (1 checks)\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
