#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bellcirc/abstraction.hpp"
#include "bellcirc/circuit.hpp"
#include "bellcirc/contracts.hpp"
#include "bellcirc/extensions.hpp"

namespace bellcirc {

// Typed views of per-command document sections.

struct SolveSection {
    std::string state;       // start state label for Monte Carlo
    int n_traj = 100000;
    double trunc_error = 1e-4;
};

struct ContractSection {
    ContractTransformer transformer;
    std::optional<ContractFn> candidate;
};

struct AbstractionSection {
    Mdp concrete;
    Mdp abstract_mdp;
    AbstractionMap phi;
    Policy pihat;
    std::string mode;  // "exact", "approx", "optimal", "symmetry"
};

struct BeliefSection {
    Pomdp pomdp;
    int horizon = 3;
    int n_traj = 2000;
    std::string policy;  // "uniform" or "fixed:<action label>"
};

struct OpeSection {
    Mdp mdp;
    Policy target;
    Policy behavior;
    Dist init;
    int horizon = 3;
};

struct TrackSection {
    std::vector<Transformer> ops;
    TrackingMode mode = TrackingMode::Exact;
};

// A parsed scenario file: named spaces, components, policies and
// transformers, plus the per-command sections. One self-contained JSON
// document per scenario; matrices are row-major arrays of rows.
class Document {
public:
    static Document load(const std::string& path);
    static Document parse(const std::string& text, const std::string& origin);

    const std::string& origin() const { return origin_; }
    std::uint64_t digest() const { return digest_; }

    const FiniteSpace& space(const std::string& name) const;
    const Policy& policy(const std::string& name) const;
    const Oddc& component(const std::string& name) const;
    const Transformer& transformer(const std::string& name) const;

    bool has_circuit() const { return circuit_.has_value(); }
    const CircuitExpr& circuit() const;
    bool has_context() const { return context_.has_value(); }
    const CircuitExpr& context() const;
    const std::vector<std::string>& candidates() const { return candidates_; }

    const std::optional<SolveSection>& solve_section() const { return solve_; }
    const std::optional<ContractSection>& contract_section() const { return contract_; }
    const std::optional<AbstractionSection>& abstraction_section() const { return abstraction_; }
    const std::optional<BeliefSection>& belief_section() const { return belief_; }
    const std::optional<OpeSection>& ope_section() const { return ope_; }
    const std::optional<TrackSection>& track_section() const { return track_; }

private:
    Document() = default;

    std::string origin_;
    std::uint64_t digest_ = 0;
    std::map<std::string, FiniteSpace> spaces_;
    std::map<std::string, Policy> policies_;
    std::map<std::string, Oddc> components_;
    std::map<std::string, Transformer> transformers_;
    std::optional<CircuitExpr> circuit_;
    std::optional<CircuitExpr> context_;
    std::vector<std::string> candidates_;
    std::optional<SolveSection> solve_;
    std::optional<ContractSection> contract_;
    std::optional<AbstractionSection> abstraction_;
    std::optional<BeliefSection> belief_;
    std::optional<OpeSection> ope_;
    std::optional<TrackSection> track_;
};

// FNV-1a digest of the raw document bytes; stable inputs fingerprint.
std::uint64_t fnv1a_digest(const std::string& bytes);

// One verified fact in a report.
struct CheckRecord {
    std::string name;
    std::optional<double> certified;
    std::optional<double> measured;
    bool pass = true;
};

// Deterministic report: identical (file, seed, flags) produce identical
// bytes. Timing never enters the rendered output.
struct Report {
    std::string command;
    std::string input;
    std::uint64_t digest = 0;
    std::uint64_t seed = 0;
    double tol = 1e-10;
    double slack = 1e-9;
    double mc_sigma = 4.0;
    std::vector<std::string> lines;  // free-form result lines (values etc.)
    std::vector<CheckRecord> checks;

    void add_line(const std::string& line) { lines.push_back(line); }
    void add_check(const std::string& name, std::optional<double> certified, std::optional<double> measured,
                   bool pass);

    bool all_pass() const;
    std::vector<std::string> failing() const;
    std::string render_text() const;
    std::string render_json() const;
};

// Fixed-width numeric formatting shared by every report (%.10g with a
// trailing .0 for integral values).
std::string fmt_num(double v);

}  // namespace bellcirc
