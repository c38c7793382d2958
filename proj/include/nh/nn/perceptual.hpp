#pragma once

#include <filesystem>
#include <optional>

#include "nh/core/image.hpp"
#include "nh/nn/layers.hpp"

namespace nh::nn {

enum class FeatureBackend {
    // Weights loaded from a checkpoint of kind "perceptual-features".
    Pretrained,
    // Seeded random convolution features; needs no downloads.
    FixedRandom,
};

struct PerceptualConfig {
    FeatureBackend backend = FeatureBackend::FixedRandom;
    std::uint64_t seed = 1234;
    std::filesystem::path weights;  // Pretrained only
    std::vector<int> widths{16, 32, 64};

    nlohmann::json to_json() const;
    static PerceptualConfig from_json(const nlohmann::json& j);
};

// Sum over scales of the mean L1 distance between feature maps. Scale 0 is
// the image itself; each further scale is conv3x3 + ReLU, with 2x average
// pooling between scales. Weights are frozen.
class PerceptualLoss {
public:
    // Throws BackendUnavailable when the pretrained weights cannot be loaded;
    // there is no silent fallback to random features.
    explicit PerceptualLoss(const PerceptualConfig& config);

    ag::Var operator()(const ag::Var& a, const ag::Var& b) const;
    double distance(const ImageF& a, const ImageF& b) const;

    const ParamSet& params() const { return params_; }

private:
    std::vector<ag::Var> features(const ag::Var& x) const;

    ParamSet params_;
    std::vector<Conv2d> convs_;
};

// Packs images into a {N, C, H, W} constant.
ag::Var stack_images(const std::vector<const ImageF*>& images);
ImageF unstack_image(const ag::Var& batch, int index);

}  // namespace nh::nn
