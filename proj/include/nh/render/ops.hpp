#pragma once

#include <nlohmann/json.hpp>

#include "nh/core/image.hpp"
#include "nh/core/rng.hpp"
#include "nh/render/formation.hpp"

namespace nh::render {

// Captured frame, mesh-based rendering, clean background plate and the binary
// render mask of the mesh rendering. All share H x W.
struct RenderSample {
    ImageF frame_gt;  // 3 channels, [0,1]
    ImageF i_orig;    // 3 channels, [0,1]
    ImageF i_backg;   // 3 channels, [0,1]
    ImageF mask_m;    // 1 channel, {0,1}

    void validate() const;
};

struct RenderOutput {
    ImageF i_corr;  // 3 channels, [-1,1]
    ImageF alpha, beta, gamma;
};

struct RenderLossWeights {
    double vgg = 1.0;
    double adv = 0.1;
    double pri = 0.1;
    double bin = 0.1;
    double reg = 0.001;

    bool operator==(const RenderLossWeights&) const = default;
};

// Warm-up/ramp schedule for the adversarial and binarisation weights.
struct LossSchedule {
    RenderLossWeights target;
    long warmup_iters = 5000;
    long ramp_iters = 1000;
    // The binarisation term additionally stays off until this epoch and then
    // ramps in linearly over mask_ramp_epochs.
    double mask_gate_epoch = 10.0;
    double mask_ramp_epochs = 1.0;

    nlohmann::json to_json() const;
    static LossSchedule from_json(const nlohmann::json& j);
};

RenderLossWeights loss_schedule(long iteration, double epoch, const LossSchedule& schedule = {});

// Mask prior on F against eroded/dilated versions of the render mask.
// Throws InvalidArgument when a radius reaches min(H, W) / 2.
double mask_prior(const ImageF& f, const ImageF& mask_m, double erode_r, double dilate_r);
double binarize_loss(const ImageF& f);
double refine_reg(const ImageF& i_corr);

// Default erosion/dilation radius: 3% of the image diagonal.
double default_mask_radius(int height, int width);

// Separable Gaussian blur, clamped borders. sigma <= 0 is the identity.
ImageF gaussian_blur(const ImageF& img, double sigma);

// Blur only within 2 sigma of the mask boundary; elsewhere unchanged.
ImageF smooth_border(const ImageF& i_orig, const ImageF& mask_m, double sigma);

struct Similarity2D {
    double scale = 1.0;
    double rotation = 0.0;   // radians
    double shift_x = 0.0;    // fraction of width
    double shift_y = 0.0;    // fraction of height

    bool is_identity() const {
        return scale == 1.0 && rotation == 0.0 && shift_x == 0.0 && shift_y == 0.0;
    }
};

struct AugmentRanges {
    double scale_min = 0.8, scale_max = 1.2;
    double max_rotation_deg = 10.0;
    double max_shift = 0.1;
};

Similarity2D draw_similarity(Rng& rng, const AugmentRanges& ranges = {});

// Warps all four images with the same similarity about the image centre:
// bilinear with edge clamping for colour, nearest (outside = 0) for the mask.
RenderSample warp_sample(const RenderSample& s, const Similarity2D& t);
RenderSample augment(const RenderSample& s, Rng& rng, const AugmentRanges& ranges = {});

}  // namespace nh::render
