#include "nh/render/ops.hpp"

#include <cmath>
#include <numbers>

namespace nh::render {
namespace {

double ramp(double x) { return std::clamp(x, 0.0, 1.0); }

float bilinear(const ImageF& img, int c, double y, double x) {
    y = std::clamp(y, 0.0, double(img.height() - 1));
    x = std::clamp(x, 0.0, double(img.width() - 1));
    const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(y0 + 1, img.height() - 1), x1 = std::min(x0 + 1, img.width() - 1);
    const double fy = y - y0, fx = x - x0;
    if (fy == 0.0 && fx == 0.0) return img(c, y0, x0);
    return static_cast<float>((1 - fy) * ((1 - fx) * img(c, y0, x0) + fx * img(c, y0, x1)) +
                              fy * ((1 - fx) * img(c, y1, x0) + fx * img(c, y1, x1)));
}

}  // namespace

void RenderSample::validate() const {
    require(frame_gt.channels() == 3 && i_orig.channels() == 3 && i_backg.channels() == 3 &&
                mask_m.channels() == 1,
            ErrorCode::ShapeMismatch, "render sample: wrong channel counts");
    require(frame_gt.same_size(i_orig) && frame_gt.same_size(i_backg) &&
                frame_gt.same_size(mask_m),
            ErrorCode::ShapeMismatch, "render sample: images differ in size");
    require(((mask_m.data() == 0.0f) || (mask_m.data() == 1.0f)).all(),
            ErrorCode::ContractViolation, "render mask is not binary");
}

nlohmann::json LossSchedule::to_json() const {
    return {{"w_vgg", target.vgg},          {"w_adv", target.adv},
            {"w_pri", target.pri},          {"w_bin", target.bin},
            {"w_reg", target.reg},          {"warmup_iters", warmup_iters},
            {"ramp_iters", ramp_iters},     {"mask_gate_epoch", mask_gate_epoch},
            {"mask_ramp_epochs", mask_ramp_epochs}};
}

LossSchedule LossSchedule::from_json(const nlohmann::json& j) {
    LossSchedule s;
    s.target.vgg = j.value("w_vgg", s.target.vgg);
    s.target.adv = j.value("w_adv", s.target.adv);
    s.target.pri = j.value("w_pri", s.target.pri);
    s.target.bin = j.value("w_bin", s.target.bin);
    s.target.reg = j.value("w_reg", s.target.reg);
    s.warmup_iters = j.value("warmup_iters", s.warmup_iters);
    s.ramp_iters = j.value("ramp_iters", s.ramp_iters);
    s.mask_gate_epoch = j.value("mask_gate_epoch", s.mask_gate_epoch);
    s.mask_ramp_epochs = j.value("mask_ramp_epochs", s.mask_ramp_epochs);
    return s;
}

RenderLossWeights loss_schedule(long iteration, double epoch, const LossSchedule& s) {
    RenderLossWeights w = s.target;
    const double ramp_in =
        s.ramp_iters > 0 ? ramp(double(iteration - s.warmup_iters) / double(s.ramp_iters))
                         : (iteration >= s.warmup_iters ? 1.0 : 0.0);
    const double gate = s.mask_ramp_epochs > 0
                            ? ramp((epoch - s.mask_gate_epoch) / s.mask_ramp_epochs)
                            : (epoch >= s.mask_gate_epoch ? 1.0 : 0.0);
    w.adv = s.target.adv * ramp_in;
    w.bin = s.target.bin * std::min(ramp_in, gate);
    return w;
}

double default_mask_radius(int height, int width) {
    return 0.03 * std::hypot(double(height), double(width));
}

double mask_prior(const ImageF& f, const ImageF& mask_m, double erode_r, double dilate_r) {
    require(f.same_size(mask_m) && f.channels() == 1 && mask_m.channels() == 1,
            ErrorCode::ShapeMismatch, "mask_prior: F and mask differ in shape");
    const double limit = std::min(f.height(), f.width()) / 2.0;
    require(erode_r >= 0 && dilate_r >= 0 && erode_r < limit && dilate_r < limit,
            ErrorCode::InvalidArgument,
            "mask_prior: radii must be in [0, min(H,W)/2), got " + std::to_string(erode_r) +
                ", " + std::to_string(dilate_r));
    const Plane<float> m = mask_m.plane(0);
    const Plane<float> me = erode_disc<float>(m, erode_r);
    const Plane<float> md = dilate_disc<float>(m, dilate_r);
    return mask_prior_value(f.plane(0).cast<double>(), me.cast<double>(), md.cast<double>());
}

double binarize_loss(const ImageF& f) { return binarize_value(f.data().cast<double>()); }

double refine_reg(const ImageF& i_corr) { return refine_reg_value(i_corr.data().cast<double>()); }

ImageF gaussian_blur(const ImageF& img, double sigma) {
    if (sigma <= 0.0) return img;
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * r + 1);
    double norm = 0.0;
    for (int i = -r; i <= r; ++i) norm += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& v : k) v /= norm;
    const int h = img.height(), w = img.width();
    ImageF tmp(h, w, img.channels()), out(h, w, img.channels());
    for (int c = 0; c < img.channels(); ++c) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int j = -r; j <= r; ++j) acc += k[j + r] * img(c, y, std::clamp(x + j, 0, w - 1));
                tmp(c, y, x) = static_cast<float>(acc);
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int j = -r; j <= r; ++j) acc += k[j + r] * tmp(c, std::clamp(y + j, 0, h - 1), x);
                out(c, y, x) = static_cast<float>(acc);
            }
    }
    return out;
}

ImageF smooth_border(const ImageF& i_orig, const ImageF& mask_m, double sigma) {
    require(i_orig.same_size(mask_m), ErrorCode::ShapeMismatch, "smooth_border: size mismatch");
    if (sigma <= 0.0) return i_orig;
    const double band = 2.0 * sigma;
    const Plane<float> m = mask_m.plane(0);
    const Plane<float> outer = dilate_disc<float>(m, band);
    const Plane<float> inner = erode_disc<float>(m, band);
    const ImageF blurred = gaussian_blur(i_orig, sigma);
    ImageF out = i_orig;
    for (int y = 0; y < i_orig.height(); ++y)
        for (int x = 0; x < i_orig.width(); ++x)
            if (outer(y, x) > 0.5f && inner(y, x) < 0.5f)
                for (int c = 0; c < i_orig.channels(); ++c) out(c, y, x) = blurred(c, y, x);
    return out;
}

Similarity2D draw_similarity(Rng& rng, const AugmentRanges& r) {
    Similarity2D t;
    t.scale = rng.uniform(r.scale_min, r.scale_max);
    t.rotation = rng.uniform(-r.max_rotation_deg, r.max_rotation_deg) * std::numbers::pi / 180.0;
    t.shift_x = rng.uniform(-r.max_shift, r.max_shift);
    t.shift_y = rng.uniform(-r.max_shift, r.max_shift);
    return t;
}

RenderSample warp_sample(const RenderSample& s, const Similarity2D& t) {
    if (t.is_identity()) return s;
    const int h = s.frame_gt.height(), w = s.frame_gt.width();
    const double cy = 0.5 * (h - 1), cx = 0.5 * (w - 1);
    const double ty = t.shift_y * h, tx = t.shift_x * w;
    const double cs = std::cos(t.rotation), sn = std::sin(t.rotation);
    RenderSample out{ImageF(h, w, 3), ImageF(h, w, 3), ImageF(h, w, 3), ImageF(h, w, 1)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            // Inverse map: source = R^T (p - c - t) / s + c.
            const double dx = x - cx - tx, dy = y - cy - ty;
            const double sx = (cs * dx + sn * dy) / t.scale + cx;
            const double sy = (-sn * dx + cs * dy) / t.scale + cy;
            for (int c = 0; c < 3; ++c) {
                out.frame_gt(c, y, x) = bilinear(s.frame_gt, c, sy, sx);
                out.i_orig(c, y, x) = bilinear(s.i_orig, c, sy, sx);
                out.i_backg(c, y, x) = bilinear(s.i_backg, c, sy, sx);
            }
            const int ny = static_cast<int>(std::lround(sy)), nx = static_cast<int>(std::lround(sx));
            out.mask_m(0, y, x) =
                (ny >= 0 && ny < h && nx >= 0 && nx < w) ? s.mask_m(0, ny, nx) : 0.0f;
        }
    }
    return out;
}

RenderSample augment(const RenderSample& s, Rng& rng, const AugmentRanges& ranges) {
    return warp_sample(s, draw_similarity(rng, ranges));
}

}  // namespace nh::render
