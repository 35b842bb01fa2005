#include "bellcirc/docio.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace bellcirc {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ParseError(where + ": " + what);
}

const json& member(const json& j, const std::string& key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) fail(where, "missing field '" + key + "'");
    return *it;
}

double number(const json& j, const std::string& where) {
    if (!j.is_number()) fail(where, "expected a number");
    return j.get<double>();
}

std::string text(const json& j, const std::string& where) {
    if (!j.is_string()) fail(where, "expected a string");
    return j.get<std::string>();
}

int integer(const json& j, const std::string& where) {
    if (!j.is_number_integer()) fail(where, "expected an integer");
    return j.get<int>();
}

Eigen::VectorXd vector_of(const json& j, const std::string& where) {
    if (!j.is_array()) fail(where, "expected an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], where);
    return v;
}

Eigen::MatrixXd matrix_of(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) fail(where, "expected a non-empty array of rows");
    const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
    if (cols == 0) fail(where, "expected rows to be arrays");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < j.size(); ++r) {
        if (!j[r].is_array() || j[r].size() != cols) fail(where, "row " + std::to_string(r) + " has the wrong length");
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = number(j[r][c], where);
    }
    return m;
}

std::vector<Eigen::Index> index_array(const json& j, const std::string& where) {
    if (!j.is_array()) fail(where, "expected an array of indices");
    std::vector<Eigen::Index> v;
    v.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number_integer()) fail(where, "expected integer indices");
        v.push_back(j[i].get<Eigen::Index>());
    }
    return v;
}

std::vector<Cost> cost_vector(const json& j, const std::string& where) {
    if (!j.is_array()) fail(where, "expected an array");
    std::vector<Cost> v;
    v.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (j[i].is_string()) {
            if (j[i].get<std::string>() != "inf") fail(where, "only \"inf\" is a valid non-numeric cost");
            v.push_back(Cost::infinity());
        } else {
            v.push_back(Cost(number(j[i], where)));
        }
    }
    return v;
}

}  // namespace

std::uint64_t fnv1a_digest(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
    }
    return h;
}

Document Document::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open file");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path);
}

Document Document::parse(const std::string& text_in, const std::string& origin) {
    json root;
    try {
        root = json::parse(text_in);
    } catch (const json::parse_error& e) {
        throw ParseError(origin + ": " + e.what());
    }
    Document doc;
    doc.origin_ = origin;
    doc.digest_ = fnv1a_digest(text_in);

    // Spaces.
    if (root.contains("spaces")) {
        for (auto it = root["spaces"].begin(); it != root["spaces"].end(); ++it) {
            const std::string where = origin + ": spaces." + it.key();
            if (!it->is_array()) fail(where, "expected an array of labels");
            std::vector<std::string> labels;
            for (const auto& l : *it) labels.push_back(text(l, where));
            doc.spaces_.emplace(it.key(), FiniteSpace(it.key(), std::move(labels)));
        }
    }
    auto lookup_space = [&](const json& j, const std::string& where) -> const FiniteSpace& {
        const std::string name = text(j, where);
        auto it = doc.spaces_.find(name);
        if (it == doc.spaces_.end()) fail(where, "unknown space '" + name + "'");
        return it->second;
    };

    // Policies.
    if (root.contains("policies")) {
        for (auto it = root["policies"].begin(); it != root["policies"].end(); ++it) {
            const std::string where = origin + ": policies." + it.key();
            const FiniteSpace& states = lookup_space(member(*it, "states", where), where);
            const FiniteSpace& actions = lookup_space(member(*it, "actions", where), where);
            doc.policies_.emplace(it.key(), Policy(states, actions, matrix_of(member(*it, "rows", where), where)));
        }
    }

    // Components.
    if (root.contains("components")) {
        for (auto it = root["components"].begin(); it != root["components"].end(); ++it) {
            const std::string where = origin + ": components." + it.key();
            const FiniteSpace& s_in = lookup_space(member(*it, "s_in", where), where);
            const FiniteSpace& actions = lookup_space(member(*it, "actions", where), where);
            const FiniteSpace& s_out = lookup_space(member(*it, "s_out", where), where);
            const FiniteSpace& rewards = lookup_space(member(*it, "rewards", where), where);
            Kernel kernel(product(s_in, actions), product(s_out, rewards),
                          matrix_of(member(*it, "kernel", where), where));
            doc.components_.emplace(it.key(),
                                    Oddc(s_in, actions, s_out, rewards, std::move(kernel),
                                         vector_of(member(*it, "rho", where), where),
                                         number(member(*it, "gamma", where), where)));
        }
    }

    // Transformers.
    if (root.contains("transformers")) {
        for (auto it = root["transformers"].begin(); it != root["transformers"].end(); ++it) {
            const std::string where = origin + ": transformers." + it.key();
            if (it->contains("component")) {
                const std::string cname = text((*it)["component"], where);
                const std::string pname = text(member(*it, "policy", where), where);
                auto cit = doc.components_.find(cname);
                if (cit == doc.components_.end()) fail(where, "unknown component '" + cname + "'");
                auto pit = doc.policies_.find(pname);
                if (pit == doc.policies_.end()) fail(where, "unknown policy '" + pname + "'");
                doc.transformers_.emplace(it.key(), make_transformer(cit->second, pit->second));
                continue;
            }
            const FiniteSpace& in = lookup_space(member(*it, "in", where), where);
            const FiniteSpace& out = lookup_space(member(*it, "out", where), where);
            const double gamma = number(member(*it, "gamma", where), where);
            Eigen::VectorXd reward = vector_of(member(*it, "reward", where), where);
            const double default_ball =
                (reward.size() ? reward.cwiseAbs().maxCoeff() : 0.0) / (1.0 - gamma);
            const double ball_in =
                it->contains("ball_in") ? number((*it)["ball_in"], where) : default_ball;
            const double ball_out =
                it->contains("ball_out") ? number((*it)["ball_out"], where) : default_ball;
            doc.transformers_.emplace(
                it.key(), Transformer(in, out, ValueFn(in, std::move(reward)), gamma,
                                      Kernel(in, out, matrix_of(member(*it, "trans", where), where)), ball_in,
                                      ball_out));
        }
    }

    // Circuit nodes.
    std::function<CircuitExpr(const json&, const std::string&)> build_node =
        [&](const json& j, const std::string& where) -> CircuitExpr {
        const std::string type = text(member(j, "type", where), where);
        if (type == "leaf") {
            if (j.contains("transformer")) {
                const std::string name = text(j["transformer"], where);
                auto it = doc.transformers_.find(name);
                if (it == doc.transformers_.end()) fail(where, "unknown transformer '" + name + "'");
                return CircuitExpr::leaf(it->second);
            }
            const std::string cname = text(member(j, "component", where), where);
            const std::string pname = text(member(j, "policy", where), where);
            auto cit = doc.components_.find(cname);
            if (cit == doc.components_.end()) fail(where, "unknown component '" + cname + "'");
            auto pit = doc.policies_.find(pname);
            if (pit == doc.policies_.end()) fail(where, "unknown policy '" + pname + "'");
            return CircuitExpr::leaf(make_transformer(cit->second, pit->second));
        }
        if (type == "series")
            return CircuitExpr::series(build_node(member(j, "first_step", where), where + ".first_step"),
                                       build_node(member(j, "second_step", where), where + ".second_step"));
        if (type == "parallel")
            return CircuitExpr::parallel(build_node(member(j, "left", where), where + ".left"),
                                         build_node(member(j, "right", where), where + ".right"));
        if (type == "trace") {
            std::optional<TraceConstants> declared;
            if (j.contains("constants")) {
                const json& c = j["constants"];
                declared = TraceConstants{number(member(c, "alpha_z", where), where),
                                          number(member(c, "eta_z", where), where),
                                          number(member(c, "beta_z", where), where),
                                          number(member(c, "a_x", where), where)};
            }
            return CircuitExpr::trace(build_node(member(j, "pre", where), where + ".pre"),
                                      lookup_space(member(j, "feedback_space", where), where),
                                      number(member(j, "feedback_radius", where), where), declared);
        }
        if (type == "hole")
            return CircuitExpr::hole(lookup_space(member(j, "in", where), where),
                                     lookup_space(member(j, "out", where), where),
                                     number(member(j, "ball_in", where), where),
                                     number(member(j, "ball_out", where), where));
        fail(where, "unknown node type '" + type + "'");
    };

    try {
        if (root.contains("circuit")) doc.circuit_ = build_node(root["circuit"], origin + ": circuit");
        if (root.contains("context")) doc.context_ = build_node(root["context"], origin + ": context");
    } catch (const TypeError& e) {
        throw ParseError(std::string(e.what()));
    }
    if (root.contains("candidates")) {
        for (const auto& c : root["candidates"]) doc.candidates_.push_back(text(c, origin + ": candidates"));
    }

    // Parses an MDP description in place.
    auto build_mdp = [&](const json& j, const std::string& where) -> Mdp {
        const FiniteSpace& states = lookup_space(member(j, "states", where), where);
        const FiniteSpace& actions = lookup_space(member(j, "actions", where), where);
        std::optional<double> declared;
        if (j.contains("r_max")) declared = number(j["r_max"], where);
        return Mdp(states, actions,
                   Kernel(product(states, actions), states, matrix_of(member(j, "trans", where), where)),
                   matrix_of(member(j, "reward", where), where), number(member(j, "gamma", where), where), declared);
    };

    if (root.contains("solve")) {
        const json& j = root["solve"];
        const std::string where = origin + ": solve";
        SolveSection s;
        s.state = j.contains("state") ? text(j["state"], where) : "";
        if (j.contains("n_traj")) s.n_traj = integer(j["n_traj"], where);
        if (j.contains("trunc_error")) s.trunc_error = number(j["trunc_error"], where);
        doc.solve_ = std::move(s);
    }

    if (root.contains("contract")) {
        const json& j = root["contract"];
        const std::string where = origin + ": contract";
        const FiniteSpace& in = lookup_space(member(j, "in", where), where);
        const FiniteSpace& out = lookup_space(member(j, "out", where), where);
        ContractTransformer t(in, out, cost_vector(member(j, "cost", where), where),
                              number(member(j, "gamma", where), where),
                              Kernel(in, out, matrix_of(member(j, "trans", where), where)));
        std::optional<ContractFn> candidate;
        if (j.contains("candidate")) candidate = ContractFn(in, cost_vector(j["candidate"], where));
        doc.contract_ = ContractSection{std::move(t), std::move(candidate)};
    }

    if (root.contains("abstraction")) {
        const json& j = root["abstraction"];
        const std::string where = origin + ": abstraction";
        Mdp concrete = build_mdp(member(j, "concrete", where), where + ".concrete");
        Mdp abstract_mdp = build_mdp(member(j, "abstract", where), where + ".abstract");
        std::optional<std::vector<Eigen::Index>> eta;
        if (j.contains("eta")) eta = index_array(j["eta"], where);
        AbstractionMap phi(concrete.states, abstract_mdp.states, index_array(member(j, "phi", where), where), eta);
        const std::string pname = text(member(j, "policy", where), where);
        auto pit = doc.policies_.find(pname);
        if (pit == doc.policies_.end()) fail(where, "unknown policy '" + pname + "'");
        const std::string mode = j.contains("mode") ? text(j["mode"], where) : "approx";
        doc.abstraction_ =
            AbstractionSection{std::move(concrete), std::move(abstract_mdp), std::move(phi), pit->second, mode};
    }

    if (root.contains("pomdp")) {
        const json& j = root["pomdp"];
        const std::string where = origin + ": pomdp";
        const FiniteSpace& states = lookup_space(member(j, "states", where), where);
        const FiniteSpace& actions = lookup_space(member(j, "actions", where), where);
        const FiniteSpace& observations = lookup_space(member(j, "observations", where), where);
        Pomdp p(states, actions, observations,
                Kernel(product(states, actions), states, matrix_of(member(j, "trans", where), where)),
                Kernel(product(states, actions), observations, matrix_of(member(j, "obs", where), where)),
                matrix_of(member(j, "reward", where), where), number(member(j, "gamma", where), where),
                Dist(states, vector_of(member(j, "init_belief", where), where)));
        BeliefSection s{std::move(p), 3, 2000, "uniform"};
        if (j.contains("horizon")) s.horizon = integer(j["horizon"], where);
        if (j.contains("n_traj")) s.n_traj = integer(j["n_traj"], where);
        if (j.contains("policy")) s.policy = text(j["policy"], where);
        doc.belief_ = std::move(s);
    }

    if (root.contains("ope")) {
        const json& j = root["ope"];
        const std::string where = origin + ": ope";
        Mdp m = build_mdp(member(j, "mdp", where), where + ".mdp");
        auto pol = [&](const char* key) -> const Policy& {
            const std::string name = text(member(j, key, where), where);
            auto it = doc.policies_.find(name);
            if (it == doc.policies_.end()) fail(where, "unknown policy '" + name + "'");
            return it->second;
        };
        Dist init(m.states, vector_of(member(j, "init", where), where));
        OpeSection s{std::move(m), pol("target"), pol("behavior"), std::move(init), 3};
        if (j.contains("horizon")) s.horizon = integer(j["horizon"], where);
        doc.ope_ = std::move(s);
    }

    if (root.contains("track")) {
        const json& j = root["track"];
        const std::string where = origin + ": track";
        TrackSection s;
        for (const auto& name_json : member(j, "ops", where)) {
            const std::string name = text(name_json, where);
            auto it = doc.transformers_.find(name);
            if (it == doc.transformers_.end()) fail(where, "unknown transformer '" + name + "'");
            s.ops.push_back(it->second);
        }
        if (j.contains("mode")) {
            const std::string mode = text(j["mode"], where);
            if (mode == "exact")
                s.mode = TrackingMode::Exact;
            else if (mode == "one-step")
                s.mode = TrackingMode::OneStep;
            else
                fail(where, "mode must be 'exact' or 'one-step'");
        }
        doc.track_ = std::move(s);
    }

    return doc;
}

const FiniteSpace& Document::space(const std::string& name) const {
    auto it = spaces_.find(name);
    if (it == spaces_.end()) throw ParseError(origin_ + ": unknown space '" + name + "'");
    return it->second;
}

const Policy& Document::policy(const std::string& name) const {
    auto it = policies_.find(name);
    if (it == policies_.end()) throw ParseError(origin_ + ": unknown policy '" + name + "'");
    return it->second;
}

const Oddc& Document::component(const std::string& name) const {
    auto it = components_.find(name);
    if (it == components_.end()) throw ParseError(origin_ + ": unknown component '" + name + "'");
    return it->second;
}

const Transformer& Document::transformer(const std::string& name) const {
    auto it = transformers_.find(name);
    if (it == transformers_.end()) throw ParseError(origin_ + ": unknown transformer '" + name + "'");
    return it->second;
}

const CircuitExpr& Document::circuit() const {
    if (!circuit_) throw ParseError(origin_ + ": document has no circuit section");
    return *circuit_;
}

const CircuitExpr& Document::context() const {
    if (!context_) throw ParseError(origin_ + ": document has no context section");
    return *context_;
}

void Report::add_check(const std::string& name, std::optional<double> certified, std::optional<double> measured,
                       bool pass) {
    checks.push_back(CheckRecord{name, certified, measured, pass});
}

bool Report::all_pass() const {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

std::vector<std::string> Report::failing() const {
    std::vector<std::string> names;
    for (const auto& c : checks)
        if (!c.pass) names.push_back(c.name);
    return names;
}

std::string fmt_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    std::string s(buf);
    if (s.find_first_of(".einf") == std::string::npos) s += ".0";
    return s;
}

std::string Report::render_text() const {
    std::ostringstream out;
    char digest_buf[32];
    std::snprintf(digest_buf, sizeof(digest_buf), "%016llx", static_cast<unsigned long long>(digest));
    out << "# bellcirc " << command << " report\n";
    out << "input: " << input << "  digest: " << digest_buf << "\n";
    out << "seed: " << seed << "  tol: " << fmt_num(tol) << "  slack: " << fmt_num(slack)
        << "  mc-sigma: " << fmt_num(mc_sigma) << "\n";
    for (const auto& line : lines) out << line << "\n";
    for (const auto& c : checks) {
        out << "check " << c.name << ":";
        if (c.certified) out << " certified=" << fmt_num(*c.certified);
        if (c.measured) out << " measured=" << fmt_num(*c.measured);
        out << (c.pass ? " PASS" : " FAIL") << "\n";
    }
    out << "RESULT: " << (all_pass() ? "PASS" : "FAIL") << " (" << checks.size() << " checks)\n";
    return out.str();
}

std::string Report::render_json() const {
    json j;
    j["command"] = command;
    j["input"] = input;
    char digest_buf[32];
    std::snprintf(digest_buf, sizeof(digest_buf), "%016llx", static_cast<unsigned long long>(digest));
    j["digest"] = digest_buf;
    j["seed"] = seed;
    j["tol"] = tol;
    j["slack"] = slack;
    j["mc_sigma"] = mc_sigma;
    j["lines"] = lines;
    j["checks"] = json::array();
    for (const auto& c : checks) {
        json cj;
        cj["name"] = c.name;
        if (c.certified) cj["certified"] = *c.certified;
        if (c.measured) cj["measured"] = *c.measured;
        cj["pass"] = c.pass;
        j["checks"].push_back(cj);
    }
    j["result"] = all_pass() ? "PASS" : "FAIL";
    return j.dump(2) + "\n";
}

}  // namespace bellcirc
