#include "bellcirc/component.hpp"

#include <cmath>

namespace bellcirc {

Oddc::Oddc(FiniteSpace s_in_, FiniteSpace actions_, FiniteSpace s_out_, FiniteSpace reward_space_,
           Kernel kernel_, Eigen::VectorXd rho_, double gamma_)
    : s_in(std::move(s_in_)),
      actions(std::move(actions_)),
      s_out(std::move(s_out_)),
      reward_space(std::move(reward_space_)),
      kernel(std::move(kernel_)),
      rho(std::move(rho_)),
      gamma(gamma_) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error("Oddc: gamma must lie in (0,1)");
    if (kernel.from() != product(s_in, actions) || kernel.to() != product(s_out, reward_space))
        throw SpaceMismatch("Oddc: kernel spaces do not match declared interfaces");
    if (rho.size() != reward_space.size()) throw SpaceMismatch("Oddc: rho length != reward space size");
    if (!rho.allFinite()) throw Error("Oddc: non-finite scalarization entry");
    r_max = rho.size() == 0 ? 0.0 : rho.cwiseAbs().maxCoeff();
}

Kernel close_loop(const Oddc& m, const Policy& pi) {
    if (pi.state_space != m.s_in)
        throw SpaceMismatch("close_loop: policy states '" + pi.state_space.name() + "' != component input '" +
                            m.s_in.name() + "'");
    if (pi.action_space != m.actions)
        throw SpaceMismatch("close_loop: policy actions '" + pi.action_space.name() + "' != component actions '" +
                            m.actions.name() + "'");
    const Eigen::Index ns = m.s_in.size();
    const Eigen::Index na = m.actions.size();
    Eigen::MatrixXd rows(ns, m.kernel.to().size());
    for (Eigen::Index s = 0; s < ns; ++s) {
        rows.row(s).setZero();
        for (Eigen::Index a = 0; a < na; ++a) rows.row(s) += pi.kernel(s, a) * m.kernel.rows().row(s * na + a);
    }
    return Kernel(m.s_in, m.kernel.to(), std::move(rows));
}

ValueFn expected_reward(const Oddc& m, const Policy& pi) {
    const Kernel closed = close_loop(m, pi);
    const Eigen::Index nr = m.reward_space.size();
    const Eigen::Index nsp = m.s_out.size();
    Eigen::VectorXd r(m.s_in.size());
    for (Eigen::Index s = 0; s < m.s_in.size(); ++s) {
        // Columns are (s'|r) pairs in row-major order; fold out s'.
        double acc = 0.0;
        for (Eigen::Index sp = 0; sp < nsp; ++sp)
            for (Eigen::Index j = 0; j < nr; ++j) acc += closed(s, sp * nr + j) * m.rho(j);
        r(s) = acc;
    }
    return ValueFn(m.s_in, std::move(r), m.r_max + kStochasticTol);
}

}  // namespace bellcirc
