#pragma once

// Image formation and mask regularisation terms of the neural re-renderer.
// Everything here is templated on the scalar type so the same code runs in
// float during training and in double inside the gradient checks.

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "nh/core/error.hpp"
#include "nh/core/image.hpp"

namespace nh::render {

template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Maps the tanh-range corrective image [-1,1] into compositing space [0,1].
template <typename Derived>
auto corr_to_unit(const Eigen::ArrayBase<Derived>& i_corr) {
    using Scalar = typename Derived::Scalar;
    return (i_corr + Scalar(1)) * Scalar(0.5);
}

// Throws ContractViolation if any pixel leaves the simplex by more than tol.
template <typename Scalar>
void check_simplex(const Image<Scalar>& alpha, const Image<Scalar>& beta,
                   const Image<Scalar>& gamma, double tol = 1e-4) {
    require(alpha.same_size(beta) && alpha.same_size(gamma), ErrorCode::ShapeMismatch,
            "weight maps differ in size");
    const auto& a = alpha.data();
    const auto& b = beta.data();
    const auto& g = gamma.data();
    const double lo = std::min({a.minCoeff(), b.minCoeff(), g.minCoeff()});
    const double dev = ((a + b + g) - Scalar(1)).abs().maxCoeff();
    if (lo < -tol || dev > tol) {
        fail(ErrorCode::ContractViolation,
             "weight maps violate the simplex (deviation " + std::to_string(dev) + ")");
    }
}

// I_out = alpha * I_orig + beta * (I_corr + 1) / 2 + gamma * I_backg, per
// pixel and channel.
template <typename Scalar>
Image<Scalar> compose(const Image<Scalar>& i_orig, const Image<Scalar>& i_corr,
                      const Image<Scalar>& i_backg, const Image<Scalar>& alpha,
                      const Image<Scalar>& beta, const Image<Scalar>& gamma) {
    require(i_orig.same_shape(i_corr) && i_orig.same_shape(i_backg) && i_orig.same_size(alpha),
            ErrorCode::ShapeMismatch, "compose: image shapes differ");
    check_simplex(alpha, beta, gamma);
    Image<Scalar> out(i_orig.height(), i_orig.width(), i_orig.channels());
    for (int c = 0; c < i_orig.channels(); ++c) {
        out.plane(c) = alpha.plane(0) * i_orig.plane(c) +
                       beta.plane(0) * corr_to_unit(i_corr.plane(c)) +
                       gamma.plane(0) * i_backg.plane(c);
    }
    return out;
}

// F = alpha + beta.
template <typename Scalar>
Image<Scalar> foreground(const Image<Scalar>& alpha, const Image<Scalar>& beta) {
    require(alpha.same_shape(beta), ErrorCode::ShapeMismatch, "foreground: shapes differ");
    Image<Scalar> f(alpha.height(), alpha.width(), 1);
    f.data() = (alpha.data() + beta.data()).min(Scalar(1)).max(Scalar(0));
    return f;
}

// Mask prior: mean over pixels of (F*Me - Me)^2 + (F*(1-Md))^2.
template <typename DF, typename DE, typename DD>
typename DF::Scalar mask_prior_value(const Eigen::ArrayBase<DF>& f,
                                     const Eigen::ArrayBase<DE>& eroded,
                                     const Eigen::ArrayBase<DD>& dilated) {
    using Scalar = typename DF::Scalar;
    const auto inside = f * eroded - eroded;
    const auto outside = f * (Scalar(1) - dilated);
    return (inside.square() + outside.square()).mean();
}

template <typename DF, typename DE, typename DD>
auto mask_prior_grad(const Eigen::ArrayBase<DF>& f, const Eigen::ArrayBase<DE>& eroded,
                     const Eigen::ArrayBase<DD>& dilated) {
    using Scalar = typename DF::Scalar;
    const Scalar n = Scalar(f.size());
    return (Scalar(2) / n) * ((f * eroded - eroded) * eroded +
                              f * (Scalar(1) - dilated).square());
}

// Binarisation: mean of |F - 1| where F > 0.5 and |F| where F < 0.5; both
// branches give 0.5 at F = 0.5, i.e. min(F, 1 - F).
template <typename DF>
typename DF::Scalar binarize_value(const Eigen::ArrayBase<DF>& f) {
    using Scalar = typename DF::Scalar;
    return f.min(Scalar(1) - f).mean();
}

// Subgradient; zero exactly at F = 0.5.
template <typename DF>
auto binarize_grad(const Eigen::ArrayBase<DF>& f) {
    using Scalar = typename DF::Scalar;
    const Scalar n = Scalar(f.size());
    return ((f < Scalar(0.5)).template cast<Scalar>() - (f > Scalar(0.5)).template cast<Scalar>()) /
           n;
}

// Refinement regulariser: mean |I_corr|.
template <typename DC>
typename DC::Scalar refine_reg_value(const Eigen::ArrayBase<DC>& i_corr) {
    return i_corr.abs().mean();
}

template <typename DC>
auto refine_reg_grad(const Eigen::ArrayBase<DC>& i_corr) {
    using Scalar = typename DC::Scalar;
    return i_corr.sign() / Scalar(i_corr.size());
}

// Binary morphology with a disc of the given radius; pixels outside the image
// are ignored. Radius 0 is the identity.
template <typename Scalar>
Plane<Scalar> dilate_disc(const Eigen::Ref<const Plane<Scalar>>& mask, double radius) {
    const int h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
    const int r = static_cast<int>(std::floor(radius));
    Plane<Scalar> out = Plane<Scalar>::Zero(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool hit = false;
            for (int dy = -r; dy <= r && !hit; ++dy) {
                for (int dx = -r; dx <= r && !hit; ++dx) {
                    if (dx * dx + dy * dy > radius * radius) continue;
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    hit = mask(yy, xx) > Scalar(0.5);
                }
            }
            out(y, x) = hit ? Scalar(1) : Scalar(0);
        }
    }
    return out;
}

template <typename Scalar>
Plane<Scalar> erode_disc(const Eigen::Ref<const Plane<Scalar>>& mask, double radius) {
    const Plane<Scalar> inv = Scalar(1) - mask;
    return Scalar(1) - dilate_disc<Scalar>(inv, radius);
}

}  // namespace nh::render
