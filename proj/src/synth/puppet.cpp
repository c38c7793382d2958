#include "nh/synth/puppet.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/QR>

#include "nh/core/container.hpp"
#include "nh/core/error.hpp"
#include "nh/core/visemes.hpp"
#include "nh/render/formation.hpp"

namespace nh::synth {
namespace {

using Color = Eigen::Array3f;

// Head ellipse radii and centre offset in normalised image units.
constexpr float kRx = 0.56f, kRy = 0.74f, kCenterY = 0.06f;
constexpr float kMouthV = 0.47f;
constexpr float kEyeU = 0.38f, kEyeV = -0.12f;

Color skin_base(Style s) {
    switch (s) {
        case Style::Happy: return {0.93f, 0.71f, 0.55f};
        case Style::Angry: return {0.90f, 0.56f, 0.49f};
        default: return {0.86f, 0.67f, 0.54f};
    }
}

struct StyleDynamics {
    double blink_rate;  // per second
    double squint;
    double brow, brow_tilt;
    double gaze_sd;
    double roll_mean, ty_mean;
    double roll_sd, tx_sd, ty_sd;
    double theta;
    double nod_amp, nod_hz;
};

StyleDynamics dynamics(Style s) {
    switch (s) {
        case Style::Happy: return {0.45, 0.20, 0.5, -0.2, 0.5, 0.07, -0.02, 0.05, 0.03, 0.015, 0.08, 0.015, 1.8};
        case Style::Angry: return {0.12, 0.30, -0.5, 0.8, 0.2, -0.06, 0.03, 0.03, 0.015, 0.01, 0.30, 0.0, 0.0};
        default: return {0.25, 0.05, 0.0, 0.0, 0.3, 0.0, 0.0, 0.04, 0.02, 0.012, 0.05, 0.0, 0.0};
    }
}

struct MouthGeom {
    float mw, mh, lip_up, lip_lo;
};

MouthGeom mouth_geom(const BlendshapeWeights& m) {
    return {0.25f * (1.0f + 0.2f * m[1] - 0.3f * m[2]), 0.02f + 0.17f * std::max(0.0f, m[0]),
            0.03f + 0.04f * m[3], 0.03f + 0.04f * m[4]};
}

// Colour of the head surface at head coordinates (u, v); the head ellipse is
// u^2 + v^2 <= 1. `fringe_band` is one pixel expressed in v units.
Color head_color(const Appearance& look, const FrameParams& p, float u, float v, bool degraded,
                 float fringe_band) {
    const float hairline = -0.42f + 0.1f * u * u;
    if (v < hairline) {
        if (!degraded && v >= hairline - fringe_band) return {0.85f, 0.75f, 0.45f};
        return Color(0.22f, 0.14f, 0.09f) * (0.9f + 0.1f * std::sin(25.0f * u));
    }
    const float shade = 0.72f + 0.28f * std::sqrt(std::max(0.0f, 1.0f - u * u - v * v));
    Color c = skin_base(look.style) * (1.0f + 0.05f * std::sin(11.0f * u + 1.3f) * std::cos(9.0f * v - 0.7f)) * shade;

    // Brows.
    for (float side : {-1.0f, 1.0f}) {
        const float q = (u - side * kEyeU) * side;  // negative towards the nose
        if (std::abs(q) < 0.17f) {
            const float yb = -0.30f - 0.09f * p.eyes[2] + p.eyes[3] * 0.05f * (-q / 0.17f);
            if (std::abs(v - yb) < 0.0225f) return {0.25f, 0.16f, 0.10f};
        }
    }
    // Eyes.
    for (int e = 0; e < 2; ++e) {
        const float side = e == 0 ? -1.0f : 1.0f;
        const float du = u - side * kEyeU, dv = v - kEyeV;
        const float blink = std::clamp(p.eyes[e], 0.0f, 1.0f);
        const float ey = 0.10f * (1.0f - blink);
        if (ey < 0.012f) {
            if (std::abs(dv) < 0.012f && std::abs(du) < 0.17f) return c * 0.55f;
            continue;
        }
        if ((du / 0.17f) * (du / 0.17f) + (dv / ey) * (dv / ey) <= 1.0f) {
            const float iu = du - 0.07f * p.eyes[4], iv = dv - 0.04f * p.eyes[5];
            const float r2 = iu * iu + iv * iv;
            if (r2 < 0.03f * 0.03f) return {0.05f, 0.05f, 0.05f};
            if (r2 < 0.065f * 0.065f) return {0.25f, 0.35f, 0.55f};
            return {0.95f, 0.95f, 0.93f};
        }
    }
    // Mouth.
    const MouthGeom g = mouth_geom(p.mouth);
    const float mu = u, mv = v - kMouthV;
    const float lip = mv < 0 ? g.lip_up : g.lip_lo;
    const float inner = (mu / g.mw) * (mu / g.mw) + (mv / g.mh) * (mv / g.mh);
    if (inner <= 1.0f) {
        if (degraded) return {0.33f, 0.08f, 0.10f};
        if (mv < -g.mh + std::clamp(p.mouth[5], 0.0f, 1.0f) * 0.6f * g.mh)
            return {0.92f, 0.90f, 0.85f};
        const float t = (mv + g.mh) / (2.0f * g.mh);
        return {0.35f + 0.2f * t, 0.06f, 0.08f};
    }
    const float ow = g.mw + 0.05f, oh = g.mh + lip;
    if ((mu / ow) * (mu / ow) + (mv / oh) * (mv / oh) <= 1.0f) return {0.72f, 0.30f, 0.32f};
    return c;
}

struct HeadFrame {
    float cx, cy, cs, sn;
};

HeadFrame head_frame(const FrameParams& p) {
    const float roll = p.pose.rotation[2];
    return {2.0f * p.pose.translation[0], kCenterY + 2.0f * p.pose.translation[1], std::cos(roll),
            std::sin(roll)};
}

// Image pixel centre -> head (u, v).
std::pair<float, float> to_head(const HeadFrame& h, int x, int y, int height, int width) {
    const float px = (x + 0.5f) / width * 2.0f - 1.0f - h.cx;
    const float py = (y + 0.5f) / height * 2.0f - 1.0f - h.cy;
    const float hx = h.cs * px + h.sn * py, hy = -h.sn * px + h.cs * py;
    return {hx / kRx, hy / kRy};
}

void put(ImageF& img, int y, int x, const Color& c) {
    for (int ch = 0; ch < 3; ++ch) img(ch, y, x) = std::clamp(c[ch], 0.0f, 1.0f);
}

double ou_step(double x, double mean, double sd, double theta, Rng& rng) {
    return x + theta * (mean - x) + sd * std::sqrt(2.0 * theta - theta * theta) * rng.normal();
}

ImageF crop(const Appearance& look, const FrameParams& p, int size, float u0, float u1, float v0,
            float v1) {
    require(size > 0, ErrorCode::InvalidArgument, "crop size must be positive");
    ImageF out(size, size, 3);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const float u = u0 + (u1 - u0) * (x + 0.5f) / size;
            const float v = v0 + (v1 - v0) * (y + 0.5f) / size;
            put(out, y, x, head_color(look, p, u, v, false, 0.0f));
        }
    return out;
}

}  // namespace

std::string style_name(Style s) {
    switch (s) {
        case Style::Neutral: return "neutral";
        case Style::Happy: return "happy";
        case Style::Angry: return "angry";
    }
    return "neutral";
}

Style style_from_name(const std::string& name) {
    if (name == "neutral") return Style::Neutral;
    if (name == "happy") return Style::Happy;
    if (name == "angry") return Style::Angry;
    fail(ErrorCode::InvalidArgument, "unknown style '" + name + "'");
}

BlendshapeWeights viseme_mouth_shape(int viseme) {
    // open, width, round, upper lip, lower lip, teeth
    static const float table[15][6] = {
        {0.00f, 0.0f, 0.0f, 0.5f, 0.5f, 0.0f},   // idle
        {0.02f, 0.0f, 0.0f, 0.8f, 0.8f, 0.0f},   // p b m
        {0.12f, 0.1f, 0.0f, 0.5f, 0.2f, 0.6f},   // f v
        {0.22f, 0.05f, 0.0f, 0.5f, 0.5f, 0.7f},  // th dh
        {0.28f, 0.1f, 0.0f, 0.5f, 0.5f, 0.5f},   // t d
        {0.38f, 0.0f, 0.1f, 0.5f, 0.5f, 0.3f},   // k g
        {0.25f, -0.3f, 0.6f, 0.6f, 0.6f, 0.6f},  // ch jh sh
        {0.15f, 0.4f, 0.0f, 0.5f, 0.5f, 0.9f},   // s z
        {0.30f, 0.1f, 0.0f, 0.5f, 0.5f, 0.4f},   // n l
        {0.25f, -0.2f, 0.5f, 0.6f, 0.6f, 0.2f},  // r
        {0.90f, 0.2f, 0.0f, 0.4f, 0.6f, 0.3f},   // aa
        {0.60f, 0.6f, 0.0f, 0.5f, 0.5f, 0.5f},   // e
        {0.35f, 0.9f, 0.0f, 0.5f, 0.5f, 0.7f},   // i
        {0.70f, -0.4f, 0.8f, 0.6f, 0.6f, 0.1f},  // o
        {0.35f, -0.6f, 1.0f, 0.7f, 0.7f, 0.0f},  // u
    };
    require(viseme >= 0 && viseme < 15, ErrorCode::InvalidArgument,
            "viseme id " + std::to_string(viseme) + " out of range");
    return Eigen::Map<const BlendshapeWeights>(table[viseme]);
}

std::vector<BlendshapeWeights> mouth_track(const VisemeSequence& visemes) {
    std::vector<BlendshapeWeights> out;
    out.reserve(visemes.ids.size());
    BlendshapeWeights m = viseme_mouth_shape(kIdleViseme);
    for (int id : visemes.ids) {
        m += 0.55f * (viseme_mouth_shape(id) - m);
        out.push_back(m);
    }
    return out;
}

std::vector<BlendshapeWeights> eye_track(Style style, std::uint64_t seed, int frames) {
    const StyleDynamics d = dynamics(style);
    Rng blink_rng(Rng::derive(seed, 11)), gaze_rng(Rng::derive(seed, 12)), brow_rng(Rng::derive(seed, 13));
    static const float profile[] = {0.5f, 1.0f, 1.0f, 0.6f, 0.25f};
    std::vector<BlendshapeWeights> out(frames);
    int blink_pos = -1;
    double gx = d.gaze_sd * gaze_rng.normal(), gy = 0.5 * d.gaze_sd * gaze_rng.normal();
    double brow_noise = 0.0;
    for (int t = 0; t < frames; ++t) {
        if (blink_pos < 0 && blink_rng.uniform() < d.blink_rate / kFps) blink_pos = 0;
        float closure = float(d.squint);
        if (blink_pos >= 0) {
            closure = std::max(closure, profile[blink_pos]);
            if (++blink_pos >= 5) blink_pos = -1;
        }
        gx = ou_step(gx, 0.0, d.gaze_sd, 0.1, gaze_rng);
        gy = ou_step(gy, 0.0, 0.5 * d.gaze_sd, 0.1, gaze_rng);
        brow_noise = ou_step(brow_noise, 0.0, 0.05, 0.1, brow_rng);
        auto& e = out[t];
        e << closure, closure, float(d.brow + brow_noise), float(d.brow_tilt), float(gx), float(gy);
    }
    return out;
}

std::vector<RigidPose> pose_track(Style style, std::uint64_t seed, int frames) {
    const StyleDynamics d = dynamics(style);
    Rng rng(Rng::derive(seed, 21));
    double roll = d.roll_mean + d.roll_sd * rng.normal();
    double tx = d.tx_sd * rng.normal();
    double ty = d.ty_mean + d.ty_sd * rng.normal();
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::vector<RigidPose> out(frames);
    for (int t = 0; t < frames; ++t) {
        roll = ou_step(roll, d.roll_mean, d.roll_sd, d.theta, rng);
        tx = ou_step(tx, 0.0, d.tx_sd, d.theta, rng);
        ty = ou_step(ty, d.ty_mean, d.ty_sd, d.theta, rng);
        const double nod = d.nod_amp * std::sin(2.0 * std::numbers::pi * d.nod_hz * t / kFps + phase);
        out[t].rotation << 0.0f, 0.0f, float(roll);
        out[t].translation << float(tx), float(ty + nod), 0.0f;
    }
    return out;
}

Lift Lift::make(std::uint64_t seed) {
    auto basis = [seed](std::uint64_t stream) {
        Rng rng(Rng::derive(seed, stream));
        Eigen::MatrixXd g(kExprDim, kBlendshapeDim);
        for (Eigen::Index j = 0; j < g.cols(); ++j)
            for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = rng.normal();
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
        Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(kExprDim, kBlendshapeDim);
        // Sign convention: positive diagonal of R.
        const Eigen::MatrixXd r = qr.matrixQR().topRows(kBlendshapeDim).triangularView<Eigen::Upper>();
        for (int j = 0; j < kBlendshapeDim; ++j)
            if (r(j, j) < 0) q.col(j) *= -1.0;
        return Eigen::Matrix<float, kExprDim, kBlendshapeDim>(q.cast<float>());
    };
    Lift l;
    l.seed = seed;
    l.mouth = basis(1);
    l.eyes = basis(2);
    l.gain = std::sqrt(float(kExprDim) / float(kBlendshapeDim));
    return l;
}

AnimationFrame Lift::to_frame(const FrameParams& p) const {
    AnimationFrame f;
    f.mouth = lift_mouth(p.mouth);
    f.eyes = lift_eyes(p.eyes);
    f.pose = p.pose;
    return f;
}

FrameParams Lift::from_frame(const AnimationFrame& f) const {
    FrameParams p;
    p.mouth = project_mouth(f.mouth);
    p.eyes = project_eyes(f.eyes);
    p.pose = f.pose;
    return p;
}

void Lift::save(const std::filesystem::path& path) const {
    std::vector<float> payload(mouth.data(), mouth.data() + mouth.size());
    payload.insert(payload.end(), eyes.data(), eyes.data() + eyes.size());
    write_container(path, Magic{'L', 'I', 'F', 'T'},
                    {{"format", "nh-lift"},
                     {"version", 1},
                     {"seed", seed},
                     {"gain", gain},
                     {"rows", kExprDim},
                     {"cols", kBlendshapeDim}},
                    payload);
}

Lift Lift::load(const std::filesystem::path& path) {
    const Container c = read_container(path, Magic{'L', 'I', 'F', 'T'});
    require(c.header.value("version", 0) == 1, ErrorCode::VersionMismatch, "unsupported lift version");
    require(c.header.value("rows", 0) == kExprDim && c.header.value("cols", 0) == kBlendshapeDim &&
                c.payload.size() == std::size_t(2 * kExprDim * kBlendshapeDim),
            ErrorCode::DimensionMismatch, "lift matrix has the wrong shape");
    Lift l;
    l.seed = c.header.value("seed", std::uint64_t(0));
    l.gain = c.header.at("gain");
    l.mouth = Eigen::Map<const Eigen::Matrix<float, kExprDim, kBlendshapeDim>>(c.payload.data());
    l.eyes = Eigen::Map<const Eigen::Matrix<float, kExprDim, kBlendshapeDim>>(
        c.payload.data() + kExprDim * kBlendshapeDim);
    return l;
}

ImageF background_plate(std::uint64_t seed, int height, int width) {
    Rng rng(Rng::derive(seed, 31));
    Color a, b;
    for (int i = 0; i < 3; ++i) a[i] = float(rng.uniform(0.25, 0.75)), b[i] = float(rng.uniform(0.25, 0.75));
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double freq = rng.uniform(8.0, 16.0);
    struct Blob { double x, y, r; Color c; };
    std::vector<Blob> blobs(5);
    for (auto& bl : blobs) {
        bl.x = rng.uniform(), bl.y = rng.uniform(), bl.r = rng.uniform(0.05, 0.2);
        for (int i = 0; i < 3; ++i) bl.c[i] = float(rng.uniform(0.1, 0.9));
    }
    ImageF img(height, width, 3);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double fx = (x + 0.5) / width, fy = (y + 0.5) / height;
            const double t = 0.5 + 0.5 * std::cos(angle) * (2 * fx - 1) * 0.9 + 0.5 * std::sin(angle) * (2 * fy - 1) * 0.1;
            Color c = a * float(t) + b * float(1 - t);
            c *= float(0.9 + 0.1 * std::sin(freq * (fx * std::cos(angle) + fy * std::sin(angle)) * 2 * std::numbers::pi));
            for (const auto& bl : blobs) {
                const double d2 = ((fx - bl.x) * (fx - bl.x) + (fy - bl.y) * (fy - bl.y)) / (bl.r * bl.r);
                const float wgt = float(std::exp(-d2));
                c = c * (1 - 0.6f * wgt) + bl.c * 0.6f * wgt;
            }
            put(img, y, x, c);
        }
    return img;
}

RenderedFrame render_puppet(const Appearance& look, const FrameParams& p, const ImageF& background) {
    const int h = look.height, w = look.width;
    require(background.height() == h && background.width() == w && background.channels() == 3,
            ErrorCode::ShapeMismatch, "background does not match the puppet size");
    const HeadFrame hf = head_frame(p);
    const float band = (2.0f / h) / kRy;
    RenderedFrame r{background, ImageF(h, w, 3, 0.0f), ImageF(h, w, 1, 0.0f), ImageF(h, w, 1, 0.0f)};
    render::Plane<float> head = render::Plane<float>::Zero(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto [u, v] = to_head(hf, x, y, h, w);
            if (u * u + v * v <= 1.0f) {
                head(y, x) = 1.0f;
                put(r.frame_gt, y, x, head_color(look, p, u, v, false, band));
            }
        }
    const render::Plane<float> eroded = render::erode_disc<float>(head, 2.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (eroded(y, x) < 0.5f) continue;
            const auto [u, v] = to_head(hf, x, y, h, w);
            put(r.i_orig, y, x, head_color(look, p, u, v, true, band));
        }
    r.mask.plane(0) = eroded;
    r.head_mask.plane(0) = head;
    return r;
}

RenderedFrame render_mesh(const Appearance& look, const FrameParams& p) {
    RenderedFrame r = render_puppet(look, p, ImageF(look.height, look.width, 3, 0.0f));
    r.frame_gt = ImageF();
    return r;
}

ImageF mouth_crop(const Appearance& look, const BlendshapeWeights& mouth, int size) {
    FrameParams p;
    p.mouth = mouth;
    return crop(look, p, size, -0.45f, 0.45f, kMouthV - 0.30f, kMouthV + 0.30f);
}

ImageF eyes_crop(const Appearance& look, const BlendshapeWeights& eyes, int size) {
    FrameParams p;
    p.eyes = eyes;
    return crop(look, p, size, -0.70f, 0.70f, -0.50f, 0.10f);
}

eval::Landmarks<double> mouth_landmarks(const FrameParams& p, int height, int width) {
    const HeadFrame hf = head_frame(p);
    const MouthGeom g = mouth_geom(p.mouth);
    eval::Landmarks<double> out(8, 2);
    for (int k = 0; k < 8; ++k) {
        const double a = k * std::numbers::pi / 4.0;
        const double mv = std::sin(a);
        const double u = (g.mw + 0.05) * std::cos(a);
        const double v = kMouthV + (g.mh + (mv < 0 ? g.lip_up : g.lip_lo)) * mv;
        const double hx = u * kRx, hy = v * kRy;
        const double px = hf.cs * hx - hf.sn * hy + hf.cx, py = hf.sn * hx + hf.cs * hy + hf.cy;
        // Normalised image coordinates; aspect kept so similarity alignment is exact.
        out(k, 0) = (px + 1.0) / 2.0 * width / std::max(height, width);
        out(k, 1) = (py + 1.0) / 2.0 * height / std::max(height, width);
    }
    return out;
}

Clip generate_clip(const PuppetSpec& spec, const VisemeSequence& visemes, const Lift& lift,
                   std::uint64_t background_seed, int crop_size, bool render) {
    const int n = frame_count(spec.duration);
    require(visemes.size() == n, ErrorCode::DimensionMismatch,
            "viseme sequence has " + std::to_string(visemes.size()) + " entries, expected " +
                std::to_string(n) + " for " + std::to_string(spec.duration) + " s");
    Clip c;
    c.spec = spec;
    c.visemes = visemes;
    const auto mouth = mouth_track(visemes);
    const auto eyes = eye_track(spec.style, spec.seed, n);
    const auto pose = pose_track(spec.style, spec.seed, n);
    c.params.resize(n);
    c.anim.frames.resize(n);
    for (int t = 0; t < n; ++t) {
        c.params[t] = {mouth[t], eyes[t], pose[t]};
        c.anim.frames[t] = lift.to_frame(c.params[t]);
    }
    if (!render) return c;
    const Appearance look{spec.height, spec.width, spec.style};
    c.i_backg = background_plate(background_seed, spec.height, spec.width);
    for (int t = 0; t < n; ++t) {
        RenderedFrame r = render_puppet(look, c.params[t], c.i_backg);
        c.frames_gt.push_back(std::move(r.frame_gt));
        c.i_orig.push_back(std::move(r.i_orig));
        c.masks.push_back(std::move(r.mask));
        c.mouth.push_back({c.params[t].mouth, mouth_crop(look, c.params[t].mouth, crop_size)});
        c.eyes.push_back({c.params[t].eyes, eyes_crop(look, c.params[t].eyes, crop_size)});
        c.landmarks.push_back(mouth_landmarks(c.params[t], spec.height, spec.width));
    }
    return c;
}

std::vector<TimedPhoneme> random_sentence(Rng& rng, double start, double max_seconds) {
    const VisemeTable& table = VisemeTable::builtin();
    std::vector<std::string> inventory;
    for (const auto& ph : table.phonemes())
        if (!table.is_silence(ph)) inventory.push_back(ph);
    std::vector<TimedPhoneme> out;
    double t = start;
    const double end = start + max_seconds;
    while (true) {
        const int len = rng.uniform_int(2, 5);
        std::vector<TimedPhoneme> word;
        double wt = t;
        for (int i = 0; i < len; ++i) {
            const double d = rng.uniform(0.06, 0.15);
            word.push_back({inventory[rng.uniform_int(0, int(inventory.size()) - 1)], wt, wt + d});
            wt += d;
        }
        if (wt > end && !out.empty()) break;
        if (wt > end) {
            // Always emit at least one word: squeeze it into the budget.
            const double k = max_seconds / (wt - t);
            for (auto& p : word) p.start = t + (p.start - t) * k, p.end = t + (p.end - t) * k;
            wt = end;
        }
        out.insert(out.end(), word.begin(), word.end());
        t = wt + rng.uniform(0.0, 0.12);
        if (t >= end) break;
    }
    return out;
}

}  // namespace nh::synth
