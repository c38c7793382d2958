#pragma once

#include <array>
#include <string>
#include <vector>

#include "nh/core/image.hpp"
#include "nh/core/rng.hpp"
#include "nh/core/types.hpp"
#include "nh/eval/metrics.hpp"
#include "nh/expr/sample.hpp"

namespace nh::synth {

enum class Style { Neutral = 0, Happy = 1, Angry = 2 };
inline constexpr int kStyleCount = 3;
std::string style_name(Style s);
Style style_from_name(const std::string& name);

struct PuppetSpec {
    int height = 64, width = 64;
    Style style = Style::Neutral;
    std::uint64_t seed = 0;
    double duration = 2.0;  // seconds
};

// True generator parameters of one frame.
//   mouth: open, width, round, upper lip, lower lip, teeth
//   eyes:  blink left, blink right, brow raise, brow tilt, gaze x, gaze y
//   pose:  roll (rotation z, radians), tx, ty (fractions of the image width);
//          the other three entries stay zero.
struct FrameParams {
    BlendshapeWeights mouth = BlendshapeWeights::Zero();
    BlendshapeWeights eyes = BlendshapeWeights::Zero();
    RigidPose pose;
};

// Mouth target shape per viseme ID (before coarticulation smoothing).
BlendshapeWeights viseme_mouth_shape(int viseme);

// Content track: a function of the viseme IDs only.
std::vector<BlendshapeWeights> mouth_track(const VisemeSequence& visemes);
// Style tracks: functions of (style, seed, length) only.
std::vector<BlendshapeWeights> eye_track(Style style, std::uint64_t seed, int frames);
std::vector<RigidPose> pose_track(Style style, std::uint64_t seed, int frames);

// Fixed orthonormal embedding of the 6 true parameters of a region into the
// 256-dim expression code, scaled by sqrt(256/6) to keep per-entry variance.
struct Lift {
    Eigen::Matrix<float, kExprDim, kBlendshapeDim> mouth, eyes;
    float gain = 1.0f;
    std::uint64_t seed = 0;

    static Lift make(std::uint64_t seed);
    ExpressionCode lift_mouth(const BlendshapeWeights& b) const { return gain * (mouth * b); }
    ExpressionCode lift_eyes(const BlendshapeWeights& b) const { return gain * (eyes * b); }
    BlendshapeWeights project_mouth(const ExpressionCode& z) const {
        return mouth.transpose() * z / gain;
    }
    BlendshapeWeights project_eyes(const ExpressionCode& z) const {
        return eyes.transpose() * z / gain;
    }

    AnimationFrame to_frame(const FrameParams& p) const;
    FrameParams from_frame(const AnimationFrame& f) const;

    void save(const std::filesystem::path& path) const;
    static Lift load(const std::filesystem::path& path);
};

struct Appearance {
    int height = 64, width = 64;
    Style style = Style::Neutral;  // skin hue
};

struct RenderedFrame {
    ImageF frame_gt;  // head over the background
    ImageF i_orig;    // degraded head over black
    ImageF mask;      // silhouette of i_orig
    ImageF head_mask; // full silhouette of the ground-truth head
};

// Background plate of the camera; depends only on (seed, size).
ImageF background_plate(std::uint64_t seed, int height, int width);

RenderedFrame render_puppet(const Appearance& look, const FrameParams& p, const ImageF& background);

// Only the degraded mesh-style rendering and its mask.
RenderedFrame render_mesh(const Appearance& look, const FrameParams& p);

// Texture-space crops (pose independent) for the expression model.
ImageF mouth_crop(const Appearance& look, const BlendshapeWeights& mouth, int size);
ImageF eyes_crop(const Appearance& look, const BlendshapeWeights& eyes, int size);

// 8 outer-lip contour points in normalised image coordinates.
eval::Landmarks<double> mouth_landmarks(const FrameParams& p, int height, int width);

struct Clip {
    PuppetSpec spec;
    VisemeSequence visemes;
    std::vector<FrameParams> params;
    AnimationSequence anim;
    ImageF i_backg;
    std::vector<ImageF> frames_gt, i_orig, masks;
    std::vector<expr::ExprSample> mouth, eyes;
    std::vector<eval::Landmarks<double>> landmarks;
};

// Visemes must have 25 * duration entries. With render = false only the
// parameter tracks and the animation sequence are filled.
Clip generate_clip(const PuppetSpec& spec, const VisemeSequence& visemes, const Lift& lift,
                   std::uint64_t background_seed, int crop_size = 64, bool render = true);

// Random "sentence": words of phonemes from the table's inventory with short
// pauses, starting at `start` seconds.
std::vector<TimedPhoneme> random_sentence(Rng& rng, double start, double max_seconds);

}  // namespace nh::synth
