#include <doctest.h>

#include <numbers>

#include "nh/core/rng.hpp"
#include "nh/render/model.hpp"

using namespace nh;
using namespace nh::render;

namespace {

ImageD random_image(int h, int w, int c, Rng& rng, double lo = 0.0, double hi = 1.0) {
    ImageD img(h, w, c);
    for (auto& v : img.data()) v = rng.uniform(lo, hi);
    return img;
}

ImageD random_mask(int h, int w, Rng& rng) {
    // A filled rectangle plus noise so both morphology branches have work.
    ImageD m(h, w, 1, 0.0);
    const int y0 = rng.uniform_int(0, h / 3), x0 = rng.uniform_int(0, w / 3);
    for (int y = y0; y < h - 1; ++y)
        for (int x = x0; x < w - 1; ++x) m(0, y, x) = 1.0;
    m(0, rng.uniform_int(0, h - 1), rng.uniform_int(0, w - 1)) = 1.0;
    return m;
}

// Simplex weights via an independent normalisation of random positives.
void random_simplex(int h, int w, Rng& rng, ImageD& a, ImageD& b, ImageD& g) {
    a = ImageD(h, w, 1), b = ImageD(h, w, 1), g = ImageD(h, w, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double p = rng.uniform(0.01, 1), q = rng.uniform(0.01, 1), r = rng.uniform(0.01, 1);
            a(0, y, x) = p / (p + q + r);
            b(0, y, x) = q / (p + q + r);
            g(0, y, x) = 1.0 - a(0, y, x) - b(0, y, x);
        }
}

double morph_bruteforce(const ImageD& m, int y, int x, double r, bool dilate) {
    for (int yy = 0; yy < m.height(); ++yy)
        for (int xx = 0; xx < m.width(); ++xx) {
            if ((yy - y) * (yy - y) + (xx - x) * (xx - x) > r * r) continue;
            if (dilate && m(0, yy, xx) == 1.0) return 1.0;
            if (!dilate && m(0, yy, xx) == 0.0) return 0.0;
        }
    return dilate ? 0.0 : 1.0;
}

double mask_prior_bruteforce(const ImageD& f, const ImageD& m, double re, double rd) {
    double acc = 0.0;
    for (int y = 0; y < f.height(); ++y)
        for (int x = 0; x < f.width(); ++x) {
            const double me = morph_bruteforce(m, y, x, re, false);
            const double md = morph_bruteforce(m, y, x, rd, true);
            const double t1 = f(0, y, x) * me - me;
            const double t2 = f(0, y, x) * (1.0 - md);
            acc += t1 * t1 + t2 * t2;
        }
    return acc / (f.height() * f.width());
}

double binarize_bruteforce(const ImageD& f) {
    double acc = 0.0;
    for (double v : f.data()) acc += v > 0.5 ? std::abs(v - 1.0) : std::abs(v);
    return acc / f.data().size();
}

ImageF to_f(const ImageD& d) { return d.cast<float>(); }

// Central differences of a scalar function of a flat array.
template <typename F>
Eigen::ArrayXd numeric_grad(F f, Eigen::ArrayXd x, double eps = 1e-3) {
    Eigen::ArrayXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + eps;
        const double up = f(x);
        x[i] = keep - eps;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2 * eps);
    }
    return g;
}

double rel_err(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
    return (a - b).abs().maxCoeff() / std::max(1e-12, std::max(a.abs().maxCoeff(), b.abs().maxCoeff()));
}

RenderSample random_sample(int h, int w, Rng& rng) {
    RenderSample s{ImageF(h, w, 3), ImageF(h, w, 3), ImageF(h, w, 3), ImageF(h, w, 1, 0.0f)};
    for (auto* img : {&s.frame_gt, &s.i_orig, &s.i_backg})
        for (auto& v : img->data()) v = float(rng.uniform());
    for (int y = h / 4; y < 3 * h / 4; ++y)
        for (int x = w / 4; x < 3 * w / 4; ++x) s.mask_m(0, y, x) = 1.0f;
    return s;
}

}  // namespace

TEST_CASE("compose and foreground examples") {
    const int h = 8, w = 8;
    ImageD orig(h, w, 3, 0.0), corr(h, w, 3, 0.2), backg(h, w, 3, 0.9);  // (0.2+1)/2 = 0.6
    ImageD third(h, w, 1, 1.0 / 3.0);
    const ImageD out = compose(orig, corr, backg, third, third, third);
    CHECK((out.data() - 0.5).abs().maxCoeff() < 1e-12);

    ImageD one(h, w, 1, 1.0), zero(h, w, 1, 0.0);
    Rng rng(3);
    const ImageD o = random_image(h, w, 3, rng), c = random_image(h, w, 3, rng, -1, 1),
                 b = random_image(h, w, 3, rng);
    CHECK(compose(o, c, b, one, zero, zero) == o);
    CHECK(compose(o, c, b, zero, zero, one) == b);

    ImageD a02(h, w, 1, 0.2), b03(h, w, 1, 0.3);
    CHECK((foreground(a02, b03).data() - 0.5).abs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(compose(o, c, b, one, one, zero), Error);
}

TEST_CASE("compose, foreground: brute-force oracle on random 8x8") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        ImageD a, be, g;
        random_simplex(8, 8, rng, a, be, g);
        const ImageD o = random_image(8, 8, 3, rng), c = random_image(8, 8, 3, rng, -1, 1),
                     bg = random_image(8, 8, 3, rng);
        const ImageD out = compose(o, c, bg, a, be, g);
        const ImageD f = foreground(a, be);
        for (int ch = 0; ch < 3; ++ch)
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) {
                    const double want = a(0, y, x) * o(ch, y, x) +
                                        be(0, y, x) * (c(ch, y, x) + 1.0) / 2.0 +
                                        g(0, y, x) * bg(ch, y, x);
                    REQUIRE(std::abs(out(ch, y, x) - want) < 1e-6);
                    const double lo = std::min({o(ch, y, x), (c(ch, y, x) + 1) / 2, bg(ch, y, x)});
                    const double hi = std::max({o(ch, y, x), (c(ch, y, x) + 1) / 2, bg(ch, y, x)});
                    REQUIRE(out(ch, y, x) >= lo - 1e-12);
                    REQUIRE(out(ch, y, x) <= hi + 1e-12);
                }
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) REQUIRE(std::abs(f(0, y, x) + g(0, y, x) - 1.0) < 1e-12);
    }
}

TEST_CASE("mask prior examples and oracle") {
    ImageF m(8, 8, 1, 0.0f);
    for (int y = 2; y < 7; ++y)
        for (int x = 1; x < 6; ++x) m(0, y, x) = 1.0f;
    CHECK(mask_prior(m, m, 0, 0) == doctest::Approx(0.0));
    CHECK(mask_prior(ImageF(8, 8, 1, 1.0f), ImageF(8, 8, 1, 0.0f), 0, 0) == doctest::Approx(1.0));

    // F = 0.5 on M_e and 0 elsewhere -> 0.25 |M_e| / HW.
    const double r = 1.0;
    const Plane<float> me = erode_disc<float>(m.plane(0), r);
    ImageF f(8, 8, 1, 0.0f);
    f.plane(0) = 0.5f * me;
    const double count = me.sum();
    CHECK(count > 0);
    CHECK(mask_prior(f, m, r, r) == doctest::Approx(0.25 * count / 64.0).epsilon(1e-9));

    CHECK_THROWS_AS(mask_prior(f, m, 4.0, 1.0), Error);
    CHECK_THROWS_AS(mask_prior(f, m, 1.0, 4.5), Error);

    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const ImageD mm = random_mask(8, 8, rng);
        const ImageD ff = random_image(8, 8, 1, rng);
        const double re = rng.uniform(0, 3.5), rd = rng.uniform(0, 3.5);
        const double want = mask_prior_bruteforce(ff, mm, re, rd);
        const Plane<double> e = erode_disc<double>(mm.plane(0), re);
        const Plane<double> d = dilate_disc<double>(mm.plane(0), rd);
        CHECK(std::abs(mask_prior_value(ff.plane(0), e, d) - want) < 1e-6);
        CHECK(std::abs(mask_prior(to_f(ff), to_f(mm), re, rd) - want) < 1e-6);
    }
}

TEST_CASE("mask prior vanishes exactly on the constructed set") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const ImageD m = random_mask(8, 8, rng);
        const double r = 1.0;
        const Plane<double> e = erode_disc<double>(m.plane(0), r);
        const Plane<double> d = dilate_disc<double>(m.plane(0), r);
        // F = 1 on M_e, 0 outside M_d, anything in the band -> 0.
        Plane<double> f(8, 8);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                f(y, x) = e(y, x) == 1.0 ? 1.0 : (d(y, x) == 0.0 ? 0.0 : rng.uniform());
        CHECK(mask_prior_value(f, e, d) == 0.0);
        // Any violation is positive.
        const int y = rng.uniform_int(0, 7), x = rng.uniform_int(0, 7);
        if (e(y, x) == 1.0 || d(y, x) == 0.0) {
            Plane<double> g = f;
            g(y, x) = e(y, x) == 1.0 ? 0.7 : 0.3;
            CHECK(mask_prior_value(g, e, d) > 0.0);
        }
    }
}

TEST_CASE("binarization and refinement examples and oracle") {
    CHECK(binarize_loss(ImageF(8, 8, 1, 0.5f)) == doctest::Approx(0.5));
    CHECK(binarize_loss(ImageF(8, 8, 1, 0.9f)) == doctest::Approx(0.1));
    ImageF bin(8, 8, 1, 0.0f);
    bin(0, 3, 3) = 1.0f;
    CHECK(binarize_loss(bin) == 0.0);
    CHECK(refine_reg(ImageF(8, 8, 3, 0.0f)) == 0.0);
    CHECK(refine_reg(ImageF(8, 8, 3, -1.0f)) == doctest::Approx(1.0));

    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const ImageD f = random_image(8, 8, 1, rng);
        CHECK(std::abs(binarize_value(f.data()) - binarize_bruteforce(f)) < 1e-6);
        const ImageD c = random_image(8, 8, 3, rng, -1, 1);
        double acc = 0.0;
        for (double v : c.data()) acc += std::abs(v);
        CHECK(std::abs(refine_reg_value(c.data()) - acc / 192.0) < 1e-6);
        // Non-binary F always costs something.
        ImageD g(8, 8, 1, 0.0);
        g(0, 1, 1) = rng.uniform(0.01, 0.99);
        CHECK(binarize_value(g.data()) > 0.0);
    }
}

TEST_CASE("analytic gradients of the mask and refinement terms") {
    Rng rng(21);
    const int h = 6, w = 6;
    for (int trial = 0; trial < 10; ++trial) {
        const ImageD m = random_mask(h, w, rng);
        const Plane<double> e = erode_disc<double>(m.plane(0), 1.0);
        const Plane<double> d = dilate_disc<double>(m.plane(0), 1.0);
        const Eigen::ArrayXd ev = e.reshaped<Eigen::RowMajor>(), dv = d.reshaped<Eigen::RowMajor>();
        Eigen::ArrayXd f(h * w);
        // Keep away from the kinks at 0.5 by more than eps.
        for (auto& v : f) v = rng.uniform() < 0.5 ? rng.uniform(0.0, 0.45) : rng.uniform(0.55, 1.0);

        const Eigen::ArrayXd g_pri = mask_prior_grad(f, ev, dv);
        const Eigen::ArrayXd n_pri =
            numeric_grad([&](const Eigen::ArrayXd& x) { return mask_prior_value(x, ev, dv); }, f);
        CHECK(rel_err(g_pri, n_pri) < 1e-3);

        const Eigen::ArrayXd g_bin = binarize_grad(f);
        const Eigen::ArrayXd n_bin =
            numeric_grad([](const Eigen::ArrayXd& x) { return binarize_value(x); }, f);
        CHECK(rel_err(g_bin, n_bin) < 1e-3);

        Eigen::ArrayXd c(h * w * 3);
        for (auto& v : c) v = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.05, 1.0);
        const Eigen::ArrayXd g_reg = refine_reg_grad(c);
        const Eigen::ArrayXd n_reg =
            numeric_grad([](const Eigen::ArrayXd& x) { return refine_reg_value(x); }, c);
        CHECK(rel_err(g_reg, n_reg) < 1e-3);
    }
}

TEST_CASE("loss schedule") {
    const LossSchedule s;
    const long per_epoch = 3100;  // ~93k iterations over 30 epochs
    auto at = [&](long it) { return loss_schedule(it, double(it) / per_epoch, s); };
    CHECK(at(0).adv == 0.0);
    CHECK(at(0).bin == 0.0);
    CHECK(at(4999).adv == 0.0);
    CHECK(at(0).vgg == 1.0);
    CHECK(at(0).pri == 0.1);
    CHECK(at(0).reg == 0.001);
    // Past epoch 10 the iteration ramp alone decides.
    CHECK(loss_schedule(5500, 11.0, s).adv == doctest::Approx(0.05));
    CHECK(loss_schedule(5500, 11.0, s).bin == doctest::Approx(0.05));
    CHECK(loss_schedule(10000, 11.0, s) == RenderLossWeights{});
    CHECK(loss_schedule(6000, 10.0 + 1.0, s) == RenderLossWeights{});
    // Before epoch 10 the mask gate holds w_bin at 0 although w_adv is on.
    CHECK(loss_schedule(10000, 5.0, s).bin == 0.0);
    CHECK(loss_schedule(10000, 5.0, s).adv == doctest::Approx(0.1));
    CHECK(loss_schedule(40000, 10.5, s).bin == doctest::Approx(0.05));

    RenderLossWeights prev = at(0);
    for (long it = 1; it < 40000; it += 7) {
        const auto cur = at(it);
        CHECK(cur.adv >= prev.adv);
        CHECK(cur.bin >= prev.bin);
        CHECK(cur.adv - prev.adv <= 0.1 * 7 / 1000.0 + 1e-12);  // continuous
        prev = cur;
    }
    CHECK(LossSchedule::from_json(s.to_json()).to_json() == s.to_json());
}

TEST_CASE("border smoothing") {
    Rng rng(4);
    const ImageD src = random_image(32, 32, 3, rng);
    const ImageF img = to_f(src);
    ImageF m(32, 32, 1, 0.0f);
    for (int y = 8; y < 24; ++y)
        for (int x = 8; x < 24; ++x) m(0, y, x) = 1.0f;
    CHECK(smooth_border(img, m, 0.0) == img);
    const double sigma = 1.5;
    const ImageF out = smooth_border(img, m, sigma);
    const ImageF full = gaussian_blur(img, sigma);
    for (int c = 0; c < 3; ++c) {
        CHECK(out(c, 16, 16) == img(c, 16, 16));  // deep interior
        CHECK(out(c, 1, 1) == img(c, 1, 1));      // far background
        CHECK(out(c, 8, 16) == full(c, 8, 16));   // on the boundary
        CHECK(out(c, 7, 16) == full(c, 7, 16));
    }
    // Blur oracle: direct 2-D convolution at an interior point.
    const int r = int(std::ceil(3 * sigma));
    double acc = 0.0, norm = 0.0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            const double k = std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
            acc += k * src(1, 16 + dy, 16 + dx);
            norm += k;
        }
    CHECK(full(1, 16, 16) == doctest::Approx(acc / norm).epsilon(1e-5));
}

TEST_CASE("augmentation warps all four images identically") {
    Rng rng(6);
    const int h = 48, w = 48;
    RenderSample s{ImageF(h, w, 3, 0.0f), ImageF(h, w, 3, 0.0f), ImageF(h, w, 3, 0.0f),
                   ImageF(h, w, 1, 0.0f)};
    // A bright marker square at the same place in every image.
    for (int y = 10; y < 16; ++y)
        for (int x = 30; x < 36; ++x) {
            for (int c = 0; c < 3; ++c) s.frame_gt(c, y, x) = s.i_orig(c, y, x) = s.i_backg(c, y, x) = 1.0f;
            s.mask_m(0, y, x) = 1.0f;
        }
    const RenderSample same = warp_sample(s, Similarity2D{});
    CHECK(same.frame_gt == s.frame_gt);
    CHECK(same.mask_m == s.mask_m);

    for (int trial = 0; trial < 10; ++trial) {
        const Similarity2D t = draw_similarity(rng);
        CHECK(t.scale >= 0.8);
        CHECK(t.scale <= 1.2);
        CHECK(std::abs(t.rotation) <= 10.0 * std::numbers::pi / 180.0);
        const RenderSample o = warp_sample(s, t);
        CHECK(o.frame_gt == o.i_orig);
        CHECK(o.frame_gt == o.i_backg);
        CHECK(((o.mask_m.data() == 0.0f) || (o.mask_m.data() == 1.0f)).all());
        // Forward-map the marker centre and compare centroids.
        const double cy = 0.5 * (h - 1), cx = 0.5 * (w - 1);
        const double px = 32.5 - cx, py = 12.5 - cy;
        const double ex = t.scale * (std::cos(t.rotation) * px - std::sin(t.rotation) * py) + cx + t.shift_x * w;
        const double ey = t.scale * (std::sin(t.rotation) * px + std::cos(t.rotation) * py) + cy + t.shift_y * h;
        auto centroid = [&](const ImageF& img) {
            double sx = 0, sy = 0, sw = 0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) sx += img(0, y, x) * x, sy += img(0, y, x) * y, sw += img(0, y, x);
            return std::pair{sx / sw, sy / sw};
        };
        const auto [gx, gy] = centroid(o.frame_gt);
        const auto [mx, my] = centroid(o.mask_m);
        CHECK(std::abs(gx - ex) < 0.5);
        CHECK(std::abs(gy - ey) < 0.5);
        CHECK(std::abs(mx - ex) < 0.75);
        CHECK(std::abs(my - ey) < 0.75);
    }
}

TEST_CASE("perceptual loss") {
    const nn::PerceptualLoss loss(nn::PerceptualConfig{});
    Rng rng(12);
    const ImageF a = to_f(random_image(32, 32, 3, rng)), b = to_f(random_image(32, 32, 3, rng));
    CHECK(loss.distance(a, a) == 0.0);
    CHECK(loss.distance(a, b) == doctest::Approx(loss.distance(b, a)).epsilon(1e-6));
    // Noise ladder: distance increases strictly with the noise amplitude.
    ImageF base(32, 32, 3);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            for (int c = 0; c < 3; ++c) base(c, y, x) = 0.5f + 0.3f * std::sin(0.3f * x + c) * std::cos(0.2f * y);
    ImageF noise(32, 32, 3);
    for (auto& v : noise.data()) v = float(rng.uniform(-1, 1));
    double prev = 0.0;
    for (double amp : {0.02, 0.05, 0.1, 0.2, 0.4}) {
        ImageF n = base;
        n.data() += float(amp) * noise.data();
        const double d = loss.distance(base, n);
        CHECK(d > prev);
        prev = d;
    }
    nn::PerceptualConfig pre;
    pre.backend = nn::FeatureBackend::Pretrained;
    pre.weights = "/nonexistent/vgg.ckpt";
    try {
        nn::PerceptualLoss l(pre);
        FAIL("expected BackendUnavailable");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BackendUnavailable);
    }
}

TEST_CASE("render objective: term oracle and breakdown") {
    Rng rng(31);
    const int h = 8, w = 8;
    nn::PerceptualConfig pixel_only;
    pixel_only.widths = {};
    const nn::PerceptualLoss perceptual(pixel_only);
    nn::PatchDiscriminator disc(3, 4, rng);

    for (int trial = 0; trial < 5; ++trial) {
        RenderSample s = random_sample(h, w, rng);
        const RenderBatch batch = make_batch({&s}, 1.0, 0.0);
        Eigen::ArrayXf logits(3 * h * w), corr(3 * h * w);
        for (auto& v : logits) v = float(rng.normal());
        for (auto& v : corr) v = float(rng.uniform(-1, 1));
        const NetOutputs out{ag::Var::constant({1, 3, h, w}, corr),
                             ag::softmax_channels(ag::Var::constant({1, 3, h, w}, logits))};
        const RenderLossWeights wts{1.0, 0.1, 0.1, 0.1, 0.001};
        const Objective obj = render_objective(batch, out, wts, perceptual, &disc);

        // Term-by-term oracle in double.
        const ImageF wimg = nn::unstack_image(out.weights, 0);
        double vgg = 0, pri = 0, bin = 0, reg = 0;
        const ImageD md = s.mask_m.cast<double>();
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double a = wimg(0, y, x), b = wimg(1, y, x);
                for (int c = 0; c < 3; ++c) {
                    const double cv = corr[(c * h + y) * w + x];
                    const double o = a * s.i_orig(c, y, x) + b * (cv + 1) / 2 +
                                     wimg(2, y, x) * s.i_backg(c, y, x);
                    vgg += std::abs(o - s.frame_gt(c, y, x));
                    reg += std::abs(cv);
                }
                const double f = a + b;
                const double me = morph_bruteforce(md, y, x, 1.0, false);
                const double mdl = morph_bruteforce(md, y, x, 1.0, true);
                pri += (f * me - me) * (f * me - me) + (f * (1 - mdl)) * (f * (1 - mdl));
                bin += std::min(f, 1 - f);
            }
        vgg /= 3 * h * w, reg /= 3 * h * w, pri /= h * w, bin /= h * w;
        CHECK(std::abs(obj.terms.vgg - vgg) < 1e-6);
        CHECK(std::abs(obj.terms.pri - pri) < 1e-6);
        CHECK(std::abs(obj.terms.bin - bin) < 1e-6);
        CHECK(std::abs(obj.terms.reg - reg) < 1e-6);
        const double sum = wts.vgg * obj.terms.vgg + wts.adv * obj.terms.adv +
                           wts.pri * obj.terms.pri + wts.bin * obj.terms.bin + wts.reg * obj.terms.reg;
        CHECK(std::abs(sum - obj.terms.total) < 1e-6);
    }
}

TEST_CASE("render objective is zero for a perfect warm-up reconstruction") {
    const int h = 8, w = 8;
    Rng rng(2);
    RenderSample s = random_sample(h, w, rng);
    // Ground truth = hard composite; weights put alpha on the mask, gamma off it.
    Eigen::ArrayXf wts = Eigen::ArrayXf::Zero(3 * h * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool in = s.mask_m(0, y, x) == 1.0f;
            wts[(in ? 0 : 2) * h * w + y * w + x] = 1.0f;
            for (int c = 0; c < 3; ++c) s.frame_gt(c, y, x) = in ? s.i_orig(c, y, x) : s.i_backg(c, y, x);
        }
    nn::PerceptualLoss perceptual(nn::PerceptualConfig{});
    const RenderBatch batch = make_batch({&s}, 1.0, 0.0);
    const NetOutputs out{ag::Var::constant({1, 3, h, w}, 0.0f), ag::Var::constant({1, 3, h, w}, wts)};
    const Objective obj = render_objective(batch, out, loss_schedule(0, 0.0), perceptual, nullptr);
    CHECK(obj.terms.total == doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("compose_op and mask ops backpropagate correctly") {
    Rng rng(17);
    const int h = 4, w = 4;
    auto param = [&](ag::Shape sh, double lo, double hi) {
        Eigen::ArrayXf v(sh.size());
        for (auto& x : v) x = float(rng.uniform(lo, hi));
        return ag::Var::parameter(sh, v);
    };
    ag::Var orig = param({2, 3, h, w}, 0, 1), corr = param({2, 3, h, w}, -0.9, 0.9),
            backg = param({2, 3, h, w}, 0, 1), logits = param({2, 3, h, w}, -1, 1),
            gt = ag::Var::constant({2, 3, h, w}, 0.3f);
    Eigen::ArrayXf e = Eigen::ArrayXf::Zero(2 * h * w), d = Eigen::ArrayXf::Ones(2 * h * w);
    e.head(5).setOnes();
    d.tail(5).setZero();
    auto f = [&]() {
        const ag::Var wts = ag::softmax_channels(logits);
        const ag::Var out = compose_op(orig, corr, backg, wts);
        const ag::Var fg = foreground_op(wts);
        return ag::mse_mean(out, gt) + mask_prior_op(fg, e, d) + 0.3f * refine_reg_op(corr);
    };
    const ag::Var loss = f();
    ag::backward(loss);
    for (ag::Var* v : {&orig, &corr, &backg, &logits}) {
        Eigen::ArrayXf analytic = v->grad();
        double worst = 0.0;
        for (Eigen::Index i = 0; i < v->size(); ++i) {
            const float keep = v->value()[i];
            v->mutable_value()[i] = keep + 1e-2f;
            const double up = f().item();
            v->mutable_value()[i] = keep - 1e-2f;
            const double down = f().item();
            v->mutable_value()[i] = keep;
            worst = std::max(worst, std::abs((up - down) / 2e-2 - analytic[i]));
        }
        CHECK(worst < 2e-3);
    }
}

TEST_CASE("U-Net forward: shapes, simplex, rejection") {
    Rng rng(1);
    UNetConfig cfg{5, 4, 2, 16};
    const RendererNet net(cfg, rng);
    CHECK(cfg.downsampling() == 16);
    CHECK(UNetConfig{}.channels(0) == 64);
    CHECK(UNetConfig{}.channels(1) == 256);
    CHECK(UNetConfig{}.channels(2) == 512);
    CHECK(UNetConfig{}.channels(4) == 512);

    ImageF img(32, 48, 3);
    for (auto& v : img.data()) v = float(rng.uniform());
    const RenderOutput out = unet_forward(net, img);
    CHECK(out.i_corr.height() == 32);
    CHECK(out.i_corr.width() == 48);
    CHECK(out.i_corr.channels() == 3);
    CHECK((out.alpha.data() + out.beta.data() + out.gamma.data() - 1.0f).abs().maxCoeff() < 1e-6);
    CHECK(out.i_corr.data().abs().maxCoeff() <= 1.0f);

    try {
        unet_forward(net, ImageF(40, 40, 3, 0.0f));
        FAIL("expected rejection");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidArgument);
        CHECK(std::string(e.what()).find("48x48") != std::string::npos);
    }
}

TEST_CASE("render_frame background substitution") {
    Rng rng(1);
    RendererConfig cfg;
    cfg.net = UNetConfig{5, 4, 2, 16};
    RendererModel model{cfg, RendererNet(cfg.net, rng)};
    ImageF img(32, 32, 3);
    for (auto& v : img.data()) v = float(rng.uniform());
    const auto black = render_frame(model, img, ImageF(32, 32, 3, 0.0f));
    const auto white = render_frame(model, img, ImageF(32, 32, 3, 1.0f));
    CHECK(black.f == white.f);
    // Difference equals gamma * (white - black) = 1 - F per pixel.
    for (int c = 0; c < 3; ++c)
        CHECK(((white.i_out.plane(c) - black.i_out.plane(c)) - (1.0f - black.f.plane(0))).abs().maxCoeff() < 1e-5);
    CHECK(black.latency_ms >= 0.0);
}

TEST_CASE("patch discriminator emits a score map") {
    Rng rng(1);
    nn::PatchDiscriminator d(3, 8, rng);
    const auto scores = d(ag::Var::constant({2, 3, 32, 32}, 0.5f));
    CHECK(scores.shape() == ag::Shape{2, 1, 4, 4});
}
