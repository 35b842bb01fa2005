#include "bellcirc/core.hpp"

#include <cmath>
#include <utility>

namespace bellcirc {

namespace {

// Validates nonnegativity and row sum, then renormalizes. Deviations above
// kRenormLimit are modeling bugs and rejected rather than papered over.
void normalize_row(Eigen::Ref<Eigen::VectorXd> row, const std::string& what) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < row.size(); ++i) {
        double p = row(i);
        if (!std::isfinite(p)) throw Error(what + ": non-finite probability entry");
        if (p < 0.0) {
            if (p < -kStochasticTol) throw Error(what + ": negative probability entry");
            row(i) = 0.0;
        }
        sum += row(i);
    }
    if (std::abs(sum - 1.0) > kRenormLimit)
        throw Error(what + ": row sum " + std::to_string(sum) + " deviates from 1 beyond renormalization limit");
    row /= sum;
}

}  // namespace

FiniteSpace::FiniteSpace(std::string name, std::vector<std::string> labels) {
    if (labels.empty()) throw Error("FiniteSpace '" + name + "': needs at least one element");
    auto data = std::make_shared<Data>();
    data->name = std::move(name);
    data->labels = std::move(labels);
    for (std::size_t i = 0; i < data->labels.size(); ++i) {
        auto [it, fresh] = data->index.emplace(data->labels[i], static_cast<Eigen::Index>(i));
        if (!fresh) throw Error("FiniteSpace '" + data->name + "': duplicate label '" + data->labels[i] + "'");
    }
    data_ = std::move(data);
}

std::optional<Eigen::Index> FiniteSpace::index_of(const std::string& label) const {
    auto it = data_->index.find(label);
    if (it == data_->index.end()) return std::nullopt;
    return it->second;
}

FiniteSpace make_space(const std::string& name, Eigen::Index n) {
    std::vector<std::string> labels;
    labels.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) labels.push_back(name + std::to_string(i));
    return FiniteSpace(name, std::move(labels));
}

FiniteSpace product(const FiniteSpace& a, const FiniteSpace& b) {
    std::vector<std::string> labels;
    labels.reserve(static_cast<std::size_t>(a.size() * b.size()));
    for (Eigen::Index i = 0; i < a.size(); ++i)
        for (Eigen::Index j = 0; j < b.size(); ++j)
            labels.push_back("(" + a.label(i) + "|" + b.label(j) + ")");
    return FiniteSpace("(" + a.name() + "|" + b.name() + ")", std::move(labels));
}

Dist::Dist(FiniteSpace space, Eigen::VectorXd probs) : space_(std::move(space)), probs_(std::move(probs)) {
    if (probs_.size() != space_.size())
        throw Error("Dist over '" + space_.name() + "': length " + std::to_string(probs_.size()) +
                    " != space size " + std::to_string(space_.size()));
    normalize_row(probs_, "Dist over '" + space_.name() + "'");
}

Dist Dist::point_mass(const FiniteSpace& space, Eigen::Index at) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(space.size());
    p(at) = 1.0;
    return Dist(space, std::move(p));
}

Dist Dist::uniform(const FiniteSpace& space) {
    return Dist(space, Eigen::VectorXd::Constant(space.size(), 1.0 / static_cast<double>(space.size())));
}

Kernel::Kernel(FiniteSpace from, FiniteSpace to, Eigen::MatrixXd rows)
    : from_(std::move(from)), to_(std::move(to)), rows_(std::move(rows)) {
    if (rows_.rows() != from_.size() || rows_.cols() != to_.size())
        throw Error("Kernel " + from_.name() + " -> " + to_.name() + ": shape " + std::to_string(rows_.rows()) +
                    "x" + std::to_string(rows_.cols()) + " does not match spaces");
    for (Eigen::Index x = 0; x < rows_.rows(); ++x) {
        Eigen::VectorXd row = rows_.row(x).transpose();
        normalize_row(row, "Kernel " + from_.name() + " -> " + to_.name() + " row '" + from_.label(x) + "'");
        rows_.row(x) = row.transpose();
    }
}

Kernel Kernel::identity(const FiniteSpace& space) {
    return Kernel(space, space, Eigen::MatrixXd::Identity(space.size(), space.size()));
}

Kernel Kernel::deterministic(const FiniteSpace& from, const FiniteSpace& to,
                             const std::vector<Eigen::Index>& map) {
    if (static_cast<Eigen::Index>(map.size()) != from.size())
        throw Error("deterministic kernel: map length does not match domain size");
    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(from.size(), to.size());
    for (Eigen::Index x = 0; x < from.size(); ++x) {
        Eigen::Index y = map[static_cast<std::size_t>(x)];
        if (y < 0 || y >= to.size()) throw Error("deterministic kernel: image index out of range");
        rows(x, y) = 1.0;
    }
    return Kernel(from, to, std::move(rows));
}

ValueFn::ValueFn(FiniteSpace space, Eigen::VectorXd values, std::optional<double> radius)
    : space_(std::move(space)), values_(std::move(values)), radius_(radius) {
    if (values_.size() != space_.size())
        throw Error("ValueFn over '" + space_.name() + "': length does not match space size");
    if (values_.size() > 0 && !values_.allFinite())
        throw Error("ValueFn over '" + space_.name() + "': non-finite entry");
    if (radius_) {
        if (*radius_ < 0.0) throw Error("ValueFn: negative ball radius");
        if (sup_norm() > *radius_ + kStochasticTol)
            throw BallViolation("ValueFn over '" + space_.name() + "': sup norm " + std::to_string(sup_norm()) +
                                " exceeds ball radius " + std::to_string(*radius_));
    }
}

ValueFn ValueFn::zero(const FiniteSpace& space, std::optional<double> radius) {
    return ValueFn(space, Eigen::VectorXd::Zero(space.size()), radius);
}

ValueFn ValueFn::constant(const FiniteSpace& space, double c, std::optional<double> radius) {
    return ValueFn(space, Eigen::VectorXd::Constant(space.size(), c), radius);
}

Kernel compose_kernels(const Kernel& k, const Kernel& l) {
    if (k.to() != l.from())
        throw SpaceMismatch("compose_kernels: interface '" + k.to().name() + "' != '" + l.from().name() + "'");
    return Kernel(k.from(), l.to(), k.rows() * l.rows());
}

Kernel tensor_kernels(const Kernel& k1, const Kernel& k2) {
    const FiniteSpace from = product(k1.from(), k2.from());
    const FiniteSpace to = product(k1.to(), k2.to());
    Eigen::MatrixXd rows(from.size(), to.size());
    for (Eigen::Index x1 = 0; x1 < k1.from().size(); ++x1)
        for (Eigen::Index x2 = 0; x2 < k2.from().size(); ++x2)
            for (Eigen::Index y1 = 0; y1 < k1.to().size(); ++y1)
                for (Eigen::Index y2 = 0; y2 < k2.to().size(); ++y2)
                    rows(x1 * k2.from().size() + x2, y1 * k2.to().size() + y2) = k1(x1, y1) * k2(x2, y2);
    return Kernel(from, to, std::move(rows));
}

Kernel pair_with_policy(const Kernel& pi) {
    const FiniteSpace& s = pi.from();
    const FiniteSpace& a = pi.to();
    const FiniteSpace sa = product(s, a);
    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(s.size(), sa.size());
    for (Eigen::Index x = 0; x < s.size(); ++x)
        for (Eigen::Index j = 0; j < a.size(); ++j) rows(x, x * a.size() + j) = pi(x, j);
    return Kernel(s, sa, std::move(rows));
}

double tv_distance(const Dist& mu, const Dist& nu) {
    if (mu.space() != nu.space())
        throw SpaceMismatch("tv_distance: '" + mu.space().name() + "' != '" + nu.space().name() + "'");
    return (mu.probs() - nu.probs()).lpNorm<1>();
}

double sup_norm_diff(const ValueFn& v, const ValueFn& w) {
    if (v.space() != w.space())
        throw SpaceMismatch("sup_norm_diff: '" + v.space().name() + "' != '" + w.space().name() + "'");
    return (v.values() - w.values()).lpNorm<Eigen::Infinity>();
}

Dist push_through(const Dist& mu, const Kernel& k) {
    if (mu.space() != k.from())
        throw SpaceMismatch("push_through: '" + mu.space().name() + "' != '" + k.from().name() + "'");
    return Dist(k.to(), (mu.probs().transpose() * k.rows()).transpose());
}

}  // namespace bellcirc
