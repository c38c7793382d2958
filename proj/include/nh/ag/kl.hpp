#pragma once

#include <Eigen/Core>

namespace nh {

// KL(N(mu, exp(log_var)) || N(0, 1)) summed over all entries:
//   0.5 * sum(mu^2 + exp(log_var) - log_var - 1)
template <typename DerivedMu, typename DerivedLv>
typename DerivedMu::Scalar gaussian_kl(const Eigen::ArrayBase<DerivedMu>& mu,
                                       const Eigen::ArrayBase<DerivedLv>& log_var) {
    using Scalar = typename DerivedMu::Scalar;
    return Scalar(0.5) * (mu.square() + log_var.exp() - log_var - Scalar(1)).sum();
}

template <typename DerivedMu>
auto gaussian_kl_grad_mu(const Eigen::ArrayBase<DerivedMu>& mu) {
    return mu.derived();
}

template <typename DerivedLv>
auto gaussian_kl_grad_log_var(const Eigen::ArrayBase<DerivedLv>& log_var) {
    using Scalar = typename DerivedLv::Scalar;
    return Scalar(0.5) * (log_var.exp() - Scalar(1));
}

}  // namespace nh
