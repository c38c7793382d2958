#include <doctest.h>

#include <numbers>

#include <Eigen/Geometry>

#include "nh/core/rng.hpp"
#include "nh/eval/metrics.hpp"

using namespace nh;
using namespace nh::eval;
using L = Landmarks<double>;

namespace {

// Brute-force similarity registration: scan the rotation angle, with the
// closed-form optimal scale for each angle, then refine by ternary search.
double lmd_bruteforce(const L& a, const L& b) {
    const L a0 = a.rowwise() - a.colwise().mean();
    const L b0 = b.rowwise() - b.colwise().mean();
    auto residual = [&](double th) {
        Eigen::Matrix2d r;
        r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
        const L rb = b0 * r.transpose();
        const double s = std::max(0.0, (a0.array() * rb.array()).sum() / rb.squaredNorm());
        return (a0 - s * rb).rowwise().squaredNorm().mean();
    };
    double best = 0.0, best_v = residual(0.0);
    const int steps = 3600;
    for (int i = 0; i < steps; ++i) {
        const double th = 2.0 * std::numbers::pi * i / steps;
        if (double v = residual(th); v < best_v) best_v = v, best = th;
    }
    double lo = best - 2.0 * std::numbers::pi / steps, hi = best + 2.0 * std::numbers::pi / steps;
    for (int it = 0; it < 200; ++it) {
        const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
        if (residual(m1) < residual(m2)) hi = m2; else lo = m1;
    }
    return residual(0.5 * (lo + hi));
}

L random_similarity(const L& p, Rng& rng) {
    const double th = rng.uniform(-3.1, 3.1), s = rng.uniform(0.2, 5.0);
    Eigen::Matrix2d r;
    r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    L out = s * p * r.transpose();
    out.rowwise() += Eigen::RowVector2d(rng.uniform(-10, 10), rng.uniform(-10, 10));
    return out;
}

ImageD constant(int h, int w, double v) { return ImageD(h, w, 3, v); }

}  // namespace

TEST_CASE("l1 / psnr / ssim closed forms") {
    auto a = constant(64, 64, 0.0), b = constant(64, 64, 1.0);
    CHECK(l1(a, a) == 0.0);
    CHECK(psnr(a, a) == kPsnrInfinite);
    CHECK(ssim(a, a) == doctest::Approx(1.0));
    CHECK(l1(a, b) == doctest::Approx(1.0));
    CHECK(psnr(a, b) == doctest::Approx(0.0));
    // 10 log10(1 / 0.0625)
    CHECK(psnr(constant(64, 64, 0.5), constant(64, 64, 0.25)) ==
          doctest::Approx(12.0411998).epsilon(1e-7));
}

TEST_CASE("metrics are symmetric") {
    Rng rng(5);
    ImageD a(16, 20, 3), b(16, 20, 3);
    for (Eigen::Index i = 0; i < a.data().size(); ++i) {
        a.data()[i] = rng.uniform();
        b.data()[i] = rng.uniform();
    }
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
    CHECK(ssim(a, b) < 1.0);
}

TEST_CASE("lmd basics") {
    L a(4, 2);
    a << 0, 0, 1, 0, 1, 1, 0, 1;
    CHECK(lmd(a, a) == doctest::Approx(0.0).epsilon(1e-12));

    SUBCASE("similarity is removed") {
        Eigen::Matrix2d r;
        const double th = std::numbers::pi / 6;
        r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
        L b = 1.5 * a * r.transpose();
        b.rowwise() += Eigen::RowVector2d(3.0, -2.0);
        CHECK(lmd(a, b) < 1e-20);
    }
    SUBCASE("displaced corner matches brute-force oracle and Eigen::umeyama") {
        L b = a;
        b(2, 0) += 0.1;
        const double oracle = lmd_bruteforce(a, b);
        CHECK(lmd(a, b) == doctest::Approx(oracle).epsilon(1e-8));
        const Eigen::Matrix3d t = Eigen::umeyama(b.transpose(), a.transpose(), true);
        L mapped = (b * t.topLeftCorner<2, 2>().transpose()).rowwise() +
                   t.topRightCorner<2, 1>().transpose();
        CHECK(lmd(a, b) == doctest::Approx((a - mapped).rowwise().squaredNorm().mean()));
        CHECK(lmd(a, b) > 0.0);
    }
    SUBCASE("degenerate source") {
        L line(3, 2);
        line << 0, 0, 1, 1, 2, 2;
        CHECK_THROWS_AS(lmd(a.topRows(3).eval(), line), Error);
        L same = L::Ones(4, 2);
        CHECK_THROWS_AS(lmd(a, same), Error);
    }
}

TEST_CASE("lmd similarity invariance property") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        L a(8, 2), b(8, 2);
        for (int i = 0; i < 8; ++i) {
            a.row(i) << rng.normal(), rng.normal();
            b.row(i) << rng.normal(), rng.normal();
        }
        const double base = lmd(a, b);
        CHECK(std::abs(lmd(a, random_similarity(b, rng)) - base) < 1e-9);
        CHECK(lmd(a, random_similarity(a, rng)) < 1e-9);
    }
}

TEST_CASE("mask statistics") {
    Eigen::ArrayXd binary(6);
    binary << 0, 1, 1, 0, 0, 1;
    CHECK(mask_stats(binary).binarization_ratio == 0.0);
    CHECK(mask_stats(Eigen::ArrayXd::Constant(10, 0.5)).binarization_ratio == 1.0);
    Eigen::ArrayXd half(8);
    half << 0, 1, 0, 1, 0.5, 0.5, 0.5, 0.5;
    CHECK(mask_stats(half).binarization_ratio == doctest::Approx(0.5));
    CHECK(mask_stats(half).mean_f == doctest::Approx(0.5));
}

TEST_CASE("learned metrics are explicit stubs") {
    UnavailableMetric lpips("lpips");
    CHECK_FALSE(lpips.available());
    CHECK_THROWS_AS(lpips.score(ImageF(2, 2, 3), ImageF(2, 2, 3)), Error);
}
