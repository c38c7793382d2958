#pragma once

// Reconstruction terms of the expression autoencoder with their analytic
// gradients, templated so the gradient checks can run in double.

#include <Eigen/Core>

#include "nh/ag/kl.hpp"

namespace nh::expr {

template <typename DA, typename DB>
typename DA::Scalar l1_value(const Eigen::ArrayBase<DA>& pred, const Eigen::ArrayBase<DB>& target) {
    return (pred - target).abs().mean();
}

template <typename DA, typename DB>
auto l1_grad(const Eigen::ArrayBase<DA>& pred, const Eigen::ArrayBase<DB>& target) {
    using Scalar = typename DA::Scalar;
    return ((pred - target).sign() / Scalar(pred.size())).eval();
}

template <typename DA, typename DB>
typename DA::Scalar mse_value(const Eigen::ArrayBase<DA>& pred, const Eigen::ArrayBase<DB>& target) {
    return (pred - target).square().mean();
}

template <typename DA, typename DB>
auto mse_grad(const Eigen::ArrayBase<DA>& pred, const Eigen::ArrayBase<DB>& target) {
    using Scalar = typename DA::Scalar;
    return (Scalar(2) * (pred - target) / Scalar(pred.size())).eval();
}

// KL to N(0, I) summed over latent dimensions, averaged over the batch.
template <typename DM, typename DL>
typename DM::Scalar kl_value(const Eigen::ArrayBase<DM>& mu, const Eigen::ArrayBase<DL>& log_var,
                             int batch) {
    using Scalar = typename DM::Scalar;
    return gaussian_kl(mu, log_var) / Scalar(batch);
}

}  // namespace nh::expr
