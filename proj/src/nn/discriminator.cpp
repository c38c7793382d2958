#include "nh/nn/discriminator.hpp"

namespace nh::nn {

PatchDiscriminator::PatchDiscriminator(int in_channels, int base_filters, Rng& rng) {
    int in = in_channels;
    for (int i = 0; i < 3; ++i) {
        const int out = base_filters << i;
        convs_.emplace_back(params_, "d" + std::to_string(i), in, out, 4, 4,
                            ag::ConvSpec{2, 2, 1, 1}, rng);
        in = out;
    }
    convs_.emplace_back(params_, "score", in, 1, 3, 3, ag::ConvSpec{1, 1, 1, 1}, rng, 0.5);
}

ag::Var PatchDiscriminator::operator()(const ag::Var& images) const {
    ag::Var h = images;
    for (std::size_t i = 0; i + 1 < convs_.size(); ++i) h = ag::leaky_relu(convs_[i](h), 0.2f);
    return convs_.back()(h);
}

ag::Var lsgan_discriminator_loss(const ag::Var& real_scores, const ag::Var& fake_scores) {
    const ag::Var real_term = ag::mean(ag::square(ag::add_scalar(real_scores, -1.0f)));
    const ag::Var fake_term = ag::mean(ag::square(fake_scores));
    return ag::scale(ag::add(real_term, fake_term), 0.5f);
}

ag::Var lsgan_generator_loss(const ag::Var& fake_scores) {
    return ag::mean(ag::square(ag::add_scalar(fake_scores, -1.0f)));
}

}  // namespace nh::nn
