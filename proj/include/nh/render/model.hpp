#pragma once

#include <filesystem>
#include <functional>
#include <optional>

#include "nh/nn/discriminator.hpp"
#include "nh/nn/perceptual.hpp"
#include "nh/render/ops.hpp"

namespace nh::render {

struct UNetConfig {
    int levels = 5;
    int base_filters = 64;
    int factor = 4;  // per-level channel growth
    int max_filters = 512;

    int channels(int level) const;
    int downsampling() const { return 1 << (levels - 1); }
    nlohmann::json to_json() const;
    static UNetConfig from_json(const nlohmann::json& j);
};

// Raw network outputs as graph nodes, {N,3,H,W} each.
struct NetOutputs {
    ag::Var i_corr;   // tanh, [-1,1]
    ag::Var weights;  // softmax over (alpha, beta, gamma)
};

class RendererNet {
public:
    RendererNet(const UNetConfig& config, Rng& rng);

    // x: {N,3,H,W} mesh renderings. Throws InvalidArgument with the required
    // padding when H or W is not divisible by the downsampling factor.
    NetOutputs forward(const ag::Var& x) const;

    const UNetConfig& config() const { return config_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

private:
    UNetConfig config_;
    nn::ParamSet params_;
    std::vector<nn::Conv2d> enc_a_, enc_b_, dec_up_, dec_merge_;
    nn::Conv2d head_;
};

// Single-image inference.
RenderOutput unet_forward(const RendererNet& net, const ImageF& i_orig);

// Graph versions of the image formation and mask terms, batch-averaged.
ag::Var compose_op(const ag::Var& i_orig, const ag::Var& i_corr, const ag::Var& i_backg,
                   const ag::Var& weights);
ag::Var foreground_op(const ag::Var& weights);
ag::Var mask_prior_op(const ag::Var& f, const Eigen::ArrayXf& eroded,
                      const Eigen::ArrayXf& dilated);
ag::Var binarize_op(const ag::Var& f);
ag::Var refine_reg_op(const ag::Var& i_corr);

struct RenderBatch {
    ag::Var frame_gt, i_orig, i_backg;  // {N,3,H,W} constants
    Eigen::ArrayXf eroded, dilated;      // {N,1,H,W} flattened
};

// Builds a batch: border smoothing of i_orig and the eroded/dilated masks.
RenderBatch make_batch(const std::vector<const RenderSample*>& samples, double mask_radius,
                       double border_sigma);

struct RenderTerms {
    double vgg = 0, adv = 0, pri = 0, bin = 0, reg = 0;
    RenderLossWeights weights;
    double total = 0;

    nlohmann::json to_json() const;
};

struct Objective {
    ag::Var total;
    ag::Var i_out;
    ag::Var f;
    RenderTerms terms;
};

// Full weighted objective. The adversarial term is evaluated only when a
// discriminator is given; otherwise it reads 0.
Objective render_objective(const RenderBatch& batch, const NetOutputs& out,
                           const RenderLossWeights& weights, const nn::PerceptualLoss& perceptual,
                           const nn::PatchDiscriminator* discriminator);

struct RendererConfig {
    UNetConfig net;
    nn::PerceptualConfig perceptual;
    LossSchedule schedule;
    int batch = 4;
    float lr = 1e-4f;
    float lr_decay = 0.95f;  // per epoch
    int epochs = 30;
    std::uint64_t seed = 0;
    int disc_filters = 64;
    double mask_radius = -1.0;  // < 0: 3% of the image diagonal
    double border_sigma = 1.5;
    bool augment = true;
    AugmentRanges augment_ranges;

    nlohmann::json to_json() const;
    static RendererConfig from_json(const nlohmann::json& j);
    // Settings that differ from the published ones.
    nlohmann::json deviations() const;
};

struct RendererModel {
    RendererConfig config;
    RendererNet net;
};

struct RendererTrainOptions {
    std::optional<std::filesystem::path> out_dir;  // checkpoints + metrics.jsonl
    std::function<void(long iteration, const RenderTerms&)> on_iteration;
};

struct RendererTrainResult {
    std::unique_ptr<RendererModel> model;
    double final_loss = 0.0;
    long iterations = 0;
};

RendererTrainResult train_renderer(const std::vector<RenderSample>& train,
                                   const RendererConfig& config,
                                   const RendererTrainOptions& options = {});

void save_renderer(const RendererModel& model, const std::filesystem::path& path);
std::unique_ptr<RendererModel> load_renderer(const std::filesystem::path& path);

struct FrameResult {
    ImageF i_out;
    ImageF f;
    RenderOutput raw;
    double latency_ms = 0.0;
};

// Inference compositing over an arbitrary new background. When mask_m is
// given, i_orig is border-smoothed as during training.
FrameResult render_frame(const RendererModel& model, const ImageF& i_orig,
                         const ImageF& i_backg_new, const ImageF* mask_m = nullptr);

struct RenderEval {
    double psnr_refined = 0, psnr_orig = 0, psnr_naive = 0;
    double l1_refined = 0, ssim_refined = 0;
    double binarization_ratio = 0;
    int samples = 0;

    nlohmann::json to_json() const;
};

// psnr_orig compares the raw mesh rendering; psnr_naive the hard composite
// M * i_orig + (1 - M) * i_backg.
RenderEval evaluate_renderer(const RendererModel& model, const std::vector<RenderSample>& val);

// Reads frames/, mesh/, mask/ and background/<camera>.png.
std::vector<RenderSample> load_render_dataset(const std::filesystem::path& dir,
                                              const std::string& camera = "cam0");

}  // namespace nh::render
