#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>

#include "nh/expr/sample.hpp"
#include "nh/nn/discriminator.hpp"

namespace nh::expr {

struct ExprLossWeights {
    double l1 = 1.0;
    double mse = 1.0;
    double adv = 0.1;
    double kl = 1e-4;
};

struct ExprConfig {
    int version = 1;
    std::string region = "mouth";
    int crop = 64;          // divisible by 16
    int latent = kExprDim;  // anything else is accepted but flagged
    int base_filters = 16;
    int hidden = 512;       // fully connected bottleneck width
    ExprLossWeights weights;
    int batch = 16;
    float lr = 1e-3f;
    float lr_decay = 0.95f;  // per epoch
    int epochs = 20;
    std::uint64_t seed = 0;
    int disc_filters = 16;

    nlohmann::json to_json() const;
    static ExprConfig from_json(const nlohmann::json& j);
    // Settings that are not the published ones (empty object when none).
    nlohmann::json flags() const;
};

struct LatentGaussian {
    Eigen::VectorXf mu, log_var;
};

struct Decoded {
    BlendshapeWeights b;
    ImageF tex;
};

// Graph outputs for a batch: tex {N,3,S,S} in [0,1], b {N,6,1,1},
// mu/log_var {N,L,1,1} with log_var clamped to [-10, 10].
struct ExprOutputs {
    ag::Var tex, b, mu, log_var;
};

class ExprNet {
public:
    ExprNet(const ExprConfig& config, Rng& rng);

    // tex {N,3,S,S}, b {N,6,1,1}.
    std::pair<ag::Var, ag::Var> encode(const ag::Var& tex, const ag::Var& b) const;
    // z {N,L,1,1} -> (tex, b).
    std::pair<ag::Var, ag::Var> decode(const ag::Var& z) const;
    // Encode, reparameterise with eps (N*L entries, or empty for z = mu), decode.
    ExprOutputs forward(const ag::Var& tex, const ag::Var& b, const Eigen::ArrayXf& eps) const;

    const ExprConfig& config() const { return config_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

private:
    ExprConfig config_;
    nn::ParamSet params_;
    std::vector<nn::Conv2d> enc_, dec_;
    nn::Linear enc_fc_, mu_fc_, lv_fc_, dec_fc1_, dec_fc2_, b_fc1_, b_fc2_;
    nn::Conv2d out_;
};

struct ExprModel {
    ExprConfig config;
    ExprNet net;
};

// Single-sample inference; deterministic. Throw ShapeMismatch on a crop of the
// wrong size or a latent of the wrong length.
LatentGaussian encode(const ExprModel& model, const ExprSample& sample);
Decoded decode(const ExprModel& model, const Eigen::VectorXf& z);

struct ExprTerms {
    double l1_tex = 0, mse_shape = 0, adv = 0, kl = 0, total = 0;
    nlohmann::json to_json() const;
};

struct ExprObjective {
    ag::Var total;
    ExprTerms terms;
};

// Weighted sum of the four terms. The adversarial term (least squares,
// generator side) is only evaluated when a discriminator is given.
ExprObjective expr_loss(const ag::Var& target_tex, const ag::Var& target_b, const ExprOutputs& out,
                        const ExprLossWeights& weights,
                        const nn::PatchDiscriminator* discriminator);

struct ExprTrainOptions {
    std::optional<std::filesystem::path> out_dir;  // <region>.ckpt + metrics.jsonl
    std::function<void(long iteration, const ExprTerms&)> on_iteration;
};

struct ExprTrainResult {
    std::unique_ptr<ExprModel> model;
    double final_loss = 0.0;
    long iterations = 0;
};

// On a non-finite loss throws TrainingDivergence naming the term; the last
// checkpoint written (one per epoch) is left in place.
ExprTrainResult train_expr_region(const std::vector<ExprSample>& train, const ExprConfig& config,
                                  const ExprTrainOptions& options = {});

struct ExprPair {
    ExprTrainResult mouth, eyes;
};

// Trains both regions from <data>/expr/{mouth,eyes}_train.bin. The two
// regions use seeds derived from config.seed.
ExprPair train_exprmodel(const std::filesystem::path& data_root, const ExprConfig& config,
                         const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct ExprEval {
    double l1_tex = 0, mse_shape = 0;
    int samples = 0;
    nlohmann::json to_json() const;
};

// Reconstruction through the posterior mean.
ExprEval evaluate_expr(const ExprModel& model, const std::vector<ExprSample>& samples);

// A freshly initialised model with the config's seed (the untrained baseline).
std::unique_ptr<ExprModel> make_untrained(const ExprConfig& config);

void save_expr(const ExprModel& model, const std::filesystem::path& path);
std::unique_ptr<ExprModel> load_expr(const std::filesystem::path& path);

}  // namespace nh::expr
