#pragma once

#include "nh/nn/layers.hpp"

namespace nh::nn {

// Patch discriminator: three 4x4 stride-2 convolutions followed by a 3x3
// scoring convolution. Produces a score map of H/8 x W/8 patches, each
// seeing a receptive field of roughly 46x46 input pixels.
class PatchDiscriminator {
public:
    PatchDiscriminator(int in_channels, int base_filters, Rng& rng);

    ag::Var operator()(const ag::Var& images) const;
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

private:
    ParamSet params_;
    std::vector<Conv2d> convs_;
};

// Least-squares GAN objectives on score maps.
ag::Var lsgan_discriminator_loss(const ag::Var& real_scores, const ag::Var& fake_scores);
ag::Var lsgan_generator_loss(const ag::Var& fake_scores);

}  // namespace nh::nn
