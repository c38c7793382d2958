#include "nh/nn/perceptual.hpp"

#include "nh/core/error.hpp"

namespace nh::nn {

nlohmann::json PerceptualConfig::to_json() const {
    return {{"backend", backend == FeatureBackend::Pretrained ? "pretrained-features"
                                                              : "fixed-random-features"},
            {"seed", seed},
            {"weights", weights.string()},
            {"widths", widths}};
}

PerceptualConfig PerceptualConfig::from_json(const nlohmann::json& j) {
    PerceptualConfig c;
    const std::string b = j.value("backend", "fixed-random-features");
    if (b == "pretrained-features") {
        c.backend = FeatureBackend::Pretrained;
    } else if (b == "fixed-random-features") {
        c.backend = FeatureBackend::FixedRandom;
    } else {
        fail(ErrorCode::InvalidArgument, "unknown perceptual backend '" + b + "'");
    }
    c.seed = j.value("seed", c.seed);
    c.weights = j.value("weights", std::string());
    c.widths = j.value("widths", c.widths);
    return c;
}

PerceptualLoss::PerceptualLoss(const PerceptualConfig& config) {
    Rng rng(config.seed);
    int in = 3;
    for (std::size_t i = 0; i < config.widths.size(); ++i) {
        convs_.emplace_back(params_, "f" + std::to_string(i), in, config.widths[i], 3, 3,
                            ag::ConvSpec{1, 1, 1, 1}, rng);
        in = config.widths[i];
    }
    if (config.backend == FeatureBackend::Pretrained) {
        if (config.weights.empty() || !std::filesystem::exists(config.weights)) {
            fail(ErrorCode::BackendUnavailable,
                 "pretrained perceptual features unavailable: weights file '" +
                     config.weights.string() + "' not found");
        }
        load_checkpoint(config.weights, "perceptual-features", {&params_});
    }
    // Frozen: gradients flow to the inputs only.
    for (auto& p : params_.all()) p.var.node()->requires_grad = false;
}

std::vector<ag::Var> PerceptualLoss::features(const ag::Var& x) const {
    std::vector<ag::Var> out{x};
    ag::Var h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        if (i > 0) h = ag::avg_pool(h, 2, 2);
        h = ag::relu(convs_[i](h));
        out.push_back(h);
    }
    return out;
}

ag::Var PerceptualLoss::operator()(const ag::Var& a, const ag::Var& b) const {
    const auto fa = features(a);
    std::vector<ag::Var> fb;
    {
        // The target side never needs gradients when it is a constant.
        fb = features(b);
    }
    ag::Var total = ag::l1_mean(fa[0], fb[0]);
    for (std::size_t i = 1; i < fa.size(); ++i) total = ag::add(total, ag::l1_mean(fa[i], fb[i]));
    return total;
}

double PerceptualLoss::distance(const ImageF& a, const ImageF& b) const {
    ag::NoGradGuard guard;
    return (*this)(stack_images({&a}), stack_images({&b})).item();
}

ag::Var stack_images(const std::vector<const ImageF*>& images) {
    require(!images.empty(), ErrorCode::InvalidArgument, "stack_images: empty batch");
    const ImageF& first = *images.front();
    const ag::Shape s{static_cast<int>(images.size()), first.channels(), first.height(),
                      first.width()};
    Eigen::ArrayXf v(s.size());
    const Eigen::Index per = first.data().size();
    for (std::size_t i = 0; i < images.size(); ++i) {
        require(images[i]->same_shape(first), ErrorCode::ShapeMismatch,
                "stack_images: images differ in shape");
        v.segment(Eigen::Index(i) * per, per) = images[i]->data();
    }
    return ag::Var::constant(s, std::move(v));
}

ImageF unstack_image(const ag::Var& batch, int index) {
    const auto& s = batch.shape();
    ImageF img(s.h, s.w, s.c);
    const Eigen::Index per = Eigen::Index(s.c) * s.h * s.w;
    img.data() = batch.value().segment(Eigen::Index(index) * per, per);
    return img;
}

}  // namespace nh::nn
