#pragma once

#include <cmath>
#include <filesystem>
#include <limits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "nh/core/error.hpp"
#include "nh/core/image.hpp"

namespace nh::eval {

// PSNR of identical images.
inline constexpr double kPsnrInfinite = std::numeric_limits<double>::infinity();

template <typename Scalar>
double l1(const Image<Scalar>& a, const Image<Scalar>& b) {
    require(a.same_shape(b), ErrorCode::ShapeMismatch, "l1: image shapes differ");
    return static_cast<double>((a.data() - b.data()).abs().mean());
}

template <typename Scalar>
double mse(const Image<Scalar>& a, const Image<Scalar>& b) {
    require(a.same_shape(b), ErrorCode::ShapeMismatch, "mse: image shapes differ");
    return (a.data().template cast<double>() - b.data().template cast<double>()).square().mean();
}

// 10 log10(1 / MSE) for images in [0,1]; kPsnrInfinite when MSE = 0.
template <typename Scalar>
double psnr(const Image<Scalar>& a, const Image<Scalar>& b) {
    const double m = mse(a, b);
    return m == 0.0 ? kPsnrInfinite : 10.0 * std::log10(1.0 / m);
}

// Mean SSIM over channels with an 11x11 Gaussian window (sigma 1.5) and the
// standard constants K1 = 0.01, K2 = 0.03 for unit dynamic range. Windows are
// truncated and renormalised at the image border.
double ssim(const ImageD& a, const ImageD& b);

template <typename Scalar>
double ssim(const Image<Scalar>& a, const Image<Scalar>& b) {
    return ssim(a.template cast<double>(), b.template cast<double>());
}

template <typename Scalar>
using Landmarks = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;

template <typename Scalar>
struct SimilarityTransform {
    Scalar scale = 1;
    Eigen::Matrix<Scalar, 2, 2> rotation = Eigen::Matrix<Scalar, 2, 2>::Identity();
    Eigen::Matrix<Scalar, 2, 1> translation = Eigen::Matrix<Scalar, 2, 1>::Zero();

    Landmarks<Scalar> apply(const Landmarks<Scalar>& p) const {
        Landmarks<Scalar> out = (scale * (p * rotation.transpose())).eval();
        out.rowwise() += translation.transpose();
        return out;
    }
};

// Least-squares similarity (rotation, uniform scale, translation) taking
// `source` onto `target`. Throws RegistrationDegenerate for fewer than three
// points or a collinear/coincident source.
template <typename Scalar>
SimilarityTransform<Scalar> fit_similarity(const Landmarks<Scalar>& target,
                                           const Landmarks<Scalar>& source) {
    require(target.rows() == source.rows(), ErrorCode::ShapeMismatch,
            "landmark sets differ in size");
    require(source.rows() >= 3, ErrorCode::RegistrationDegenerate,
            "registration needs at least 3 landmarks");
    const Eigen::Index k = source.rows();
    const Eigen::Matrix<Scalar, 1, 2> mt = target.colwise().mean();
    const Eigen::Matrix<Scalar, 1, 2> ms = source.colwise().mean();
    const Landmarks<Scalar> t0 = target.rowwise() - mt;
    const Landmarks<Scalar> s0 = source.rowwise() - ms;

    Eigen::JacobiSVD<Landmarks<Scalar>> spread(s0);
    const auto sv = spread.singularValues();
    if (sv[0] <= Scalar(0) || sv[1] <= sv[0] * Scalar(1e-9)) {
        fail(ErrorCode::RegistrationDegenerate, "source landmarks are collinear or coincident");
    }

    const Eigen::Matrix<Scalar, 2, 2> cov = t0.transpose() * s0 / Scalar(k);
    Eigen::JacobiSVD<Eigen::Matrix<Scalar, 2, 2>> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix<Scalar, 2, 2> d = Eigen::Matrix<Scalar, 2, 2>::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < Scalar(0)) d(1, 1) = Scalar(-1);

    SimilarityTransform<Scalar> x;
    x.rotation = svd.matrixU() * d * svd.matrixV().transpose();
    const Scalar var_s = s0.squaredNorm() / Scalar(k);
    x.scale = (svd.singularValues().asDiagonal() * d).trace() / var_s;
    x.translation = mt.transpose() - x.scale * x.rotation * ms.transpose();
    return x;
}

// Landmark distance: register b onto a by a similarity transform, then the
// mean over landmarks of the squared point distance.
template <typename Scalar>
Scalar lmd(const Landmarks<Scalar>& a, const Landmarks<Scalar>& b) {
    const auto x = fit_similarity(a, b);
    return (a - x.apply(b)).rowwise().squaredNorm().mean();
}

struct MaskStats {
    double binarization_ratio = 0.0;  // fraction of F in (0.1, 0.9)
    double mean_f = 0.0;
};

template <typename Derived>
MaskStats mask_stats(const Eigen::ArrayBase<Derived>& f) {
    MaskStats s;
    if (f.size() == 0) return s;
    s.binarization_ratio = ((f > 0.1) && (f < 0.9)).template cast<double>().mean();
    s.mean_f = static_cast<double>(f.template cast<double>().mean());
    return s;
}

// Compares every PNG in `gt_dir` with the same-named file in `pred_dir`.
// Report: {"frames":[{"name","l1","psnr","ssim"}...], "aggregate":{...}}.
// An infinite PSNR is written as the string "inf".
nlohmann::json compare_image_dirs(const std::filesystem::path& pred_dir,
                                  const std::filesystem::path& gt_dir);

// Optional learned metrics (LPIPS, lip-sync confidence) plug in here; the
// built-in implementation reports them as unavailable.
class LearnedMetric {
public:
    virtual ~LearnedMetric() = default;
    virtual std::string name() const = 0;
    virtual bool available() const = 0;
    virtual double score(const ImageF& a, const ImageF& b) const = 0;
};

class UnavailableMetric final : public LearnedMetric {
public:
    explicit UnavailableMetric(std::string name) : name_(std::move(name)) {}
    std::string name() const override { return name_; }
    bool available() const override { return false; }
    double score(const ImageF&, const ImageF&) const override {
        fail(ErrorCode::BackendUnavailable, name_ + " requires an external pretrained model");
    }

private:
    std::string name_;
};

}  // namespace nh::eval
