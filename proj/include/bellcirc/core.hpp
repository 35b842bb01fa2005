#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "bellcirc/errors.hpp"

namespace bellcirc {

// Tolerances shared across the library. A row (or distribution) whose sum
// deviates from 1 by more than kRenormLimit is rejected outright; smaller
// deviations are renormalized so that stored rows sum to 1 within
// kStochasticTol.
inline constexpr double kStochasticTol = 1e-12;
inline constexpr double kRenormLimit = 1e-9;

// A named finite measurable space: an ordered list of distinct labels.
// Copies are cheap (shared immutable payload) and equality is structural,
// so two independently built spaces with the same name and labels are
// interchangeable.
class FiniteSpace {
public:
    FiniteSpace(std::string name, std::vector<std::string> labels);

    Eigen::Index size() const { return static_cast<Eigen::Index>(data_->labels.size()); }
    const std::string& name() const { return data_->name; }
    const std::string& label(Eigen::Index i) const { return data_->labels.at(static_cast<std::size_t>(i)); }
    const std::vector<std::string>& labels() const { return data_->labels; }
    std::optional<Eigen::Index> index_of(const std::string& label) const;

    friend bool operator==(const FiniteSpace& a, const FiniteSpace& b) {
        return a.data_ == b.data_ || (a.data_->name == b.data_->name && a.data_->labels == b.data_->labels);
    }
    friend bool operator!=(const FiniteSpace& a, const FiniteSpace& b) { return !(a == b); }

private:
    struct Data {
        std::string name;
        std::vector<std::string> labels;
        std::unordered_map<std::string, Eigen::Index> index;
    };
    std::shared_ptr<const Data> data_;
};

// Convenience: space named `name` with labels name0..name(n-1).
FiniteSpace make_space(const std::string& name, Eigen::Index n);

// Row-major product space with labels "(x|y)". Index of (i, j) is
// i * b.size() + j, so tensored objects are reproducible bit for bit.
FiniteSpace product(const FiniteSpace& a, const FiniteSpace& b);

inline Eigen::Index pair_index(const FiniteSpace& a, const FiniteSpace& b, Eigen::Index i, Eigen::Index j) {
    (void)a;
    return i * b.size() + j;
}

// A probability distribution over a finite space.
class Dist {
public:
    Dist(FiniteSpace space, Eigen::VectorXd probs);

    const FiniteSpace& space() const { return space_; }
    const Eigen::VectorXd& probs() const { return probs_; }
    double operator()(Eigen::Index i) const { return probs_(i); }
    Eigen::Index size() const { return probs_.size(); }

    static Dist point_mass(const FiniteSpace& space, Eigen::Index at);
    static Dist uniform(const FiniteSpace& space);

private:
    FiniteSpace space_;
    Eigen::VectorXd probs_;
};

// A Markov kernel from one finite space to distributions on another,
// stored as a row-stochastic |from| x |to| matrix.
class Kernel {
public:
    Kernel(FiniteSpace from, FiniteSpace to, Eigen::MatrixXd rows);

    const FiniteSpace& from() const { return from_; }
    const FiniteSpace& to() const { return to_; }
    const Eigen::MatrixXd& rows() const { return rows_; }
    double operator()(Eigen::Index x, Eigen::Index y) const { return rows_(x, y); }

    Dist row(Eigen::Index x) const { return Dist(to_, rows_.row(x).transpose()); }

    static Kernel identity(const FiniteSpace& space);
    // Deterministic kernel induced by a map from -> to given as an index array.
    static Kernel deterministic(const FiniteSpace& from, const FiniteSpace& to,
                                const std::vector<Eigen::Index>& map);

private:
    FiniteSpace from_;
    FiniteSpace to_;
    Eigen::MatrixXd rows_;
};

// A bounded real-valued function on a finite space, optionally tagged with
// the radius of the invariant sup-norm ball it is known to live in.
class ValueFn {
public:
    ValueFn(FiniteSpace space, Eigen::VectorXd values, std::optional<double> radius = std::nullopt);

    const FiniteSpace& space() const { return space_; }
    const Eigen::VectorXd& values() const { return values_; }
    double operator()(Eigen::Index i) const { return values_(i); }
    Eigen::Index size() const { return values_.size(); }
    std::optional<double> radius() const { return radius_; }
    double sup_norm() const { return values_.size() == 0 ? 0.0 : values_.cwiseAbs().maxCoeff(); }

    static ValueFn zero(const FiniteSpace& space, std::optional<double> radius = std::nullopt);
    static ValueFn constant(const FiniteSpace& space, double c, std::optional<double> radius = std::nullopt);

private:
    FiniteSpace space_;
    Eigen::VectorXd values_;
    std::optional<double> radius_;
};

// Chapman-Kolmogorov composition: result(x, z) = sum_y k(y|x) l(z|y).
Kernel compose_kernels(const Kernel& k, const Kernel& l);

// Independent product: entry((x1,x2),(y1,y2)) = k1(y1|x1) k2(y2|x2) on the
// row-major product spaces.
Kernel tensor_kernels(const Kernel& k1, const Kernel& k2);

// Copies the state to the first output wire and samples an action on the
// second: entry(s, (s',a)) = [s'==s] pi(a|s).
Kernel pair_with_policy(const Kernel& pi);

// Total variation in the sup-over-test-functions convention:
// sum_i |mu_i - nu_i|, with values in [0, 2].
double tv_distance(const Dist& mu, const Dist& nu);

// max_s |v(s) - w(s)|.
double sup_norm_diff(const ValueFn& v, const ValueFn& w);

// Pushforward of a distribution through a kernel: (mu K)(y) = sum_x mu(x) k(y|x).
Dist push_through(const Dist& mu, const Kernel& k);

}  // namespace bellcirc
