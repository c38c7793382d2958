#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>

#include "nh/core/types.hpp"
#include "nh/nn/layers.hpp"

namespace nh::anim {

// One training take: ground-truth parameters and the viseme track in sync.
struct Take {
    AnimationSequence seq;
    VisemeSequence visemes;
};

enum class Part { Eyes, Pose };
std::string part_name(Part p);

// Per-dimension standardisation of the 518-dim frame vectors.
struct Standardizer {
    Eigen::VectorXf mean = Eigen::VectorXf::Zero(kFrameDim);
    Eigen::VectorXf scale = Eigen::VectorXf::Ones(kFrameDim);

    // Dimensions with (near) zero spread keep scale 1.
    static Standardizer fit(const std::vector<Take>& takes);
    Eigen::MatrixXf apply(const Eigen::MatrixXf& x, int offset = 0) const;
    Eigen::MatrixXf invert(const Eigen::MatrixXf& x, int offset = 0) const;
};

// Variational sequence autoencoder over {N, d, 1, T}. Each encoder block is
// conv(k3, p1) + leaky ReLU + average pooling by 2; the decoder mirrors it
// with x2 upsampling. Gaussian latent of `latent` channels at T / 2^depth.
class Vsae {
public:
    Vsae(int dim, int depth, int filters, int latent, Rng& rng);

    // T must be a multiple of 2^depth.
    std::pair<ag::Var, ag::Var> encode(const ag::Var& x) const;
    ag::Var decode(const ag::Var& z) const;

    int dim() const { return dim_; }
    int depth() const { return depth_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

private:
    int dim_, depth_;
    nn::ParamSet params_;
    std::vector<nn::Conv2d> enc_, dec_;
    nn::Conv2d mu_, log_var_, out_;
};

// conv(k9, p4) stack + global temporal average pooling -> Gaussian style.
class StyleEncoder {
public:
    StyleEncoder(int layers, int filters, int style_dim, Rng& rng);

    // x {N, 518, 1, T}; throws InvalidArgument for T < 9.
    std::pair<ag::Var, ag::Var> operator()(const ag::Var& x) const;

    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

private:
    nn::ParamSet params_;
    std::vector<nn::Conv2d> convs_;
    nn::Linear mu_, log_var_;
};

struct AnimNetOutputs {
    ag::Var mouth;  // {N, 256, 1, Tp}
    ag::Var eyes;   // {N, 128, 1, Tp / 4}
    ag::Var pose;   // {N, 128, 1, Tp / 16}
};

// Viseme embedding concatenated with the broadcast style vector, a trunk of
// residual conv(k9) blocks, a full-rate mouth head and strided latent heads.
class AnimNet {
public:
    AnimNet(int visemes, int embed, int style_dim, int filters, int blocks, int eye_stride,
            int pose_stride, int latent, Rng& rng);

    // ids n-major, Tp a multiple of the pose stride; style {N, style_dim, 1, 1}.
    AnimNetOutputs forward(std::span<const int> ids, int n, int tp, const ag::Var& style) const;

    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

private:
    nn::ParamSet params_;
    ag::Var table_;
    nn::Conv2d input_;
    std::vector<nn::Conv2d> blocks_a_, blocks_b_;
    nn::Conv2d mouth_, eyes_, pose_;
};

struct AnimConfig {
    int version = 1;
    int filters = 128;
    int latent = 128;
    int style_dim = 128;
    int embed = 128;
    int res_blocks = 6;
    int style_layers = 3;
    int eye_depth = 2;
    int pose_depth = 4;
    int batch = 32;
    float lr_prior = 1e-3f;
    float lr_anim = 5e-4f;
    float lr_gamma = 0.96f;
    long decay_every = 1000;  // iterations per gamma step
    long iterations = 25000;
    double lambda_prior = 1e-4;
    double lambda_style = 1e-4;
    double min_seconds = 2.5, max_seconds = 10.0;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static AnimConfig from_json(const nlohmann::json& j);
    nlohmann::json deviations() const;
};

struct AnimModel {
    AnimConfig config;
    Standardizer norm;
    Vsae eyes, pose;
    StyleEncoder style;
    AnimNet net;

    AnimModel(const AnimConfig& config, Rng& rng);
    const Vsae& vsae(Part p) const { return p == Part::Eyes ? eyes : pose; }
    int stride(Part p) const { return 1 << vsae(p).depth(); }
};

// Latent sequences as L x 128 matrices (one row per latent step).
struct VsaeEncoding {
    Eigen::MatrixXf mu, log_var, draw;
};

// x_part: T x d raw parameters (256 eye code entries or 6 pose entries). T is
// padded to a multiple of 2^N by repeating the last frame, so the latent has
// ceil(T / 2^N) steps. `draw` uses eps from rng when given, else equals mu.
VsaeEncoding vsae_encode(const AnimModel& model, Part part, const Eigen::MatrixXf& x_part,
                         Rng* rng = nullptr);
// (L * 2^N) x d raw parameters.
Eigen::MatrixXf vsae_decode(const AnimModel& model, Part part, const Eigen::MatrixXf& z);

struct StyleGaussian {
    Eigen::VectorXf mu, log_var;
};
StyleGaussian style_encode(const AnimModel& model, const Eigen::MatrixXf& x);  // T x 518
inline StyleGaussian style_encode(const AnimModel& model, const AnimationSequence& seq) {
    return style_encode(model, seq.to_matrix());
}

struct AnimOutput {
    int frames = 0;
    Eigen::MatrixXf x_mouth;  // T x 256, raw
    Eigen::MatrixXf z_eyes;   // ceil(T/4) x 128
    Eigen::MatrixXf z_pose;   // ceil(T/16) x 128
};

// Visemes are right-padded with idle to a multiple of the pose stride and
// the outputs trimmed back.
AnimOutput animate(const AnimModel& model, const VisemeSequence& visemes,
                   const Eigen::VectorXf& z_style);
// Runs the VSAE decoders and packs T frames.
AnimationSequence full_decode(const AnimModel& model, const AnimOutput& out);

// --- losses --------------------------------------------------------------

struct VsaeTerms {
    double mse = 0, kl = 0, total = 0;
};
// mean squared error + lambda * KL (summed over channels, mean over steps).
std::pair<ag::Var, VsaeTerms> vsae_loss(const ag::Var& x, const ag::Var& x_hat, const ag::Var& mu,
                                         const ag::Var& log_var, double lambda);

struct AnimTerms {
    double mouth = 0, eyes = 0, pose = 0, kl = 0, total = 0;
    nlohmann::json to_json() const;
};
// Mean squared errors of the three predictions + lambda * KL(style).
std::pair<ag::Var, AnimTerms> anim_loss(const ag::Var& mouth, const ag::Var& mouth_target,
                                         const ag::Var& eyes, const ag::Var& eyes_target,
                                         const ag::Var& pose, const ag::Var& pose_target,
                                         const ag::Var& style_mu, const ag::Var& style_log_var,
                                         double lambda);

// --- training ------------------------------------------------------------

struct AnimStep {
    long iteration = 0;
    int length = 0;
    AnimTerms anim;
    VsaeTerms eyes, pose;
};

struct AnimTrainOptions {
    std::optional<std::filesystem::path> out_dir;  // anim.ckpt + metrics.jsonl
    std::function<void(const AnimStep&)> on_iteration;
    long checkpoint_every = 500;
};

struct AnimTrainResult {
    std::unique_ptr<AnimModel> model;
    double final_loss = 0.0;
    long iterations = 0;
};

AnimTrainResult train_anim(const std::vector<Take>& train, const AnimConfig& config,
                           const AnimTrainOptions& options = {});

void save_anim(const AnimModel& model, const std::filesystem::path& path);
std::unique_ptr<AnimModel> load_anim(const std::filesystem::path& path);

}  // namespace nh::anim
