#include "nh/expr/model.hpp"

#include <fstream>

#include "nh/core/error.hpp"
#include "nh/expr/loss.hpp"
#include "nh/nn/perceptual.hpp"

namespace nh::expr {
namespace {

using ag::Shape;
using ag::Var;

constexpr ag::ConvSpec kSame3{1, 1, 1, 1};
constexpr ag::ConvSpec kDown3{2, 2, 1, 1};

int feature_side(const ExprConfig& c) { return c.crop / 16; }
int feature_channels(const ExprConfig& c) { return 8 * c.base_filters; }

Var stack_b(const std::vector<const ExprSample*>& samples) {
    Eigen::ArrayXf v(samples.size() * kBlendshapeDim);
    for (std::size_t i = 0; i < samples.size(); ++i)
        v.segment(i * kBlendshapeDim, kBlendshapeDim) = samples[i]->b.array();
    return Var::constant(Shape{int(samples.size()), kBlendshapeDim, 1, 1}, std::move(v));
}

Var stack_tex(const std::vector<const ExprSample*>& samples) {
    std::vector<const ImageF*> imgs;
    for (const auto* s : samples) imgs.push_back(&s->tex);
    return nn::stack_images(imgs);
}

void check_crop(const ExprConfig& c, const ImageF& tex) {
    require(tex.channels() == 3 && tex.height() == c.crop && tex.width() == c.crop,
            ErrorCode::ShapeMismatch,
            "expression model for " + c.region + " expects " + std::to_string(c.crop) + "x" +
                std::to_string(c.crop) + "x3 crops, got " + std::to_string(tex.height()) + "x" +
                std::to_string(tex.width()) + "x" + std::to_string(tex.channels()));
}

}  // namespace

nlohmann::json ExprConfig::to_json() const {
    return {{"version", version},
            {"region", region},
            {"crop", crop},
            {"latent", latent},
            {"base_filters", base_filters},
            {"hidden", hidden},
            {"weights", {{"l1", weights.l1}, {"mse", weights.mse}, {"adv", weights.adv}, {"kl", weights.kl}}},
            {"batch", batch},
            {"lr", lr},
            {"lr_decay", lr_decay},
            {"epochs", epochs},
            {"seed", seed},
            {"disc_filters", disc_filters}};
}

ExprConfig ExprConfig::from_json(const nlohmann::json& j) {
    ExprConfig c;
    c.version = j.value("version", c.version);
    require(c.version == 1, ErrorCode::VersionMismatch,
            "expression config version " + std::to_string(c.version) + " is not supported");
    c.region = j.value("region", c.region);
    c.crop = j.value("crop", c.crop);
    c.latent = j.value("latent", c.latent);
    c.base_filters = j.value("base_filters", c.base_filters);
    c.hidden = j.value("hidden", c.hidden);
    if (j.contains("weights")) {
        const auto& w = j["weights"];
        c.weights.l1 = w.value("l1", c.weights.l1);
        c.weights.mse = w.value("mse", c.weights.mse);
        c.weights.adv = w.value("adv", c.weights.adv);
        c.weights.kl = w.value("kl", c.weights.kl);
    }
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.lr_decay = j.value("lr_decay", c.lr_decay);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.disc_filters = j.value("disc_filters", c.disc_filters);
    require(c.crop >= 16 && c.crop % 16 == 0, ErrorCode::InvalidArgument,
            "expression crop must be a positive multiple of 16");
    require(c.latent > 0 && c.base_filters > 0 && c.hidden > 0 && c.batch > 0 && c.epochs > 0 &&
                c.lr > 0,
            ErrorCode::InvalidArgument, "expression config out of range");
    return c;
}

nlohmann::json ExprConfig::flags() const {
    nlohmann::json f = nlohmann::json::object();
    if (latent != kExprDim)
        f["latent"] = {{"value", latent}, {"published", kExprDim}, {"non_paper", true}};
    return f;
}

ExprNet::ExprNet(const ExprConfig& config, Rng& rng) : config_(config) {
    require(config.crop % 16 == 0, ErrorCode::InvalidArgument,
            "expression crop must be a multiple of 16");
    const int c = config.base_filters;
    const int widths[5] = {3, c, 2 * c, 4 * c, 8 * c};
    for (int l = 0; l < 4; ++l)
        enc_.emplace_back(params_, "enc" + std::to_string(l), widths[l], widths[l + 1], 3, 3, kDown3, rng);
    const int side = feature_side(config);
    const int flat = feature_channels(config) * side * side;
    enc_fc_ = nn::Linear(params_, "enc_fc", flat + kBlendshapeDim, config.hidden, rng);
    mu_fc_ = nn::Linear(params_, "mu", config.hidden, config.latent, rng, 0.5);
    lv_fc_ = nn::Linear(params_, "log_var", config.hidden, config.latent, rng, 0.1);
    dec_fc1_ = nn::Linear(params_, "dec_fc1", config.latent, config.hidden, rng);
    dec_fc2_ = nn::Linear(params_, "dec_fc2", config.hidden, flat, rng);
    const int up[5] = {8 * c, 4 * c, 2 * c, c, c};
    for (int l = 0; l < 4; ++l)
        dec_.emplace_back(params_, "dec" + std::to_string(l), up[l], up[l + 1], 3, 3, kSame3, rng);
    out_ = nn::Conv2d(params_, "out", c, 3, 3, 3, kSame3, rng);
    b_fc1_ = nn::Linear(params_, "b_fc1", config.latent, 128, rng);
    b_fc2_ = nn::Linear(params_, "b_fc2", 128, kBlendshapeDim, rng);
}

std::pair<Var, Var> ExprNet::encode(const Var& tex, const Var& b) const {
    const Shape s = tex.shape();
    require(s.c == 3 && s.h == config_.crop && s.w == config_.crop, ErrorCode::ShapeMismatch,
            "expression encoder expects " + std::to_string(config_.crop) + "x" +
                std::to_string(config_.crop) + " crops");
    require(b.shape() == Shape{s.n, kBlendshapeDim, 1, 1}, ErrorCode::ShapeMismatch,
            "expression encoder expects 6 shape weights per sample");
    Var h = tex;
    for (const auto& conv : enc_) h = ag::leaky_relu(conv(h));
    h = ag::reshape(h, Shape{s.n, int(h.size() / s.n), 1, 1});
    h = ag::leaky_relu(enc_fc_(ag::concat_channels({h, b})));
    return {mu_fc_(h), ag::clamp(lv_fc_(h), -10.0f, 10.0f)};
}

std::pair<Var, Var> ExprNet::decode(const Var& z) const {
    const Shape s = z.shape();
    require(s.c == config_.latent && s.h == 1 && s.w == 1, ErrorCode::ShapeMismatch,
            "expression decoder expects a latent of size " + std::to_string(config_.latent) +
                ", got " + std::to_string(s.c));
    const int side = feature_side(config_);
    Var h = ag::leaky_relu(dec_fc2_(ag::leaky_relu(dec_fc1_(z))));
    h = ag::reshape(h, Shape{s.n, feature_channels(config_), side, side});
    for (const auto& conv : dec_) h = ag::leaky_relu(conv(ag::upsample(h, 2, 2)));
    Var tex = ag::sigmoid(out_(h));
    Var b = b_fc2_(ag::leaky_relu(b_fc1_(z)));
    return {tex, b};
}

ExprOutputs ExprNet::forward(const Var& tex, const Var& b, const Eigen::ArrayXf& eps) const {
    auto [mu, log_var] = encode(tex, b);
    const Var z = eps.size() == 0 ? mu : ag::reparameterize(mu, log_var, eps);
    auto [tex_hat, b_hat] = decode(z);
    return {tex_hat, b_hat, mu, log_var};
}

LatentGaussian encode(const ExprModel& model, const ExprSample& sample) {
    check_crop(model.config, sample.tex);
    ag::NoGradGuard guard;
    const auto [mu, lv] = model.net.encode(stack_tex({&sample}), stack_b({&sample}));
    return {mu.value().matrix(), lv.value().matrix()};
}

Decoded decode(const ExprModel& model, const Eigen::VectorXf& z) {
    require(z.size() == model.config.latent, ErrorCode::ShapeMismatch,
            "latent must have " + std::to_string(model.config.latent) + " entries, got " +
                std::to_string(z.size()));
    ag::NoGradGuard guard;
    const auto [tex, b] =
        model.net.decode(Var::constant(Shape{1, int(z.size()), 1, 1}, Eigen::ArrayXf(z.array())));
    return {BlendshapeWeights(b.value().matrix()), nn::unstack_image(tex, 0)};
}

nlohmann::json ExprTerms::to_json() const {
    return {{"l1_tex", l1_tex}, {"mse_shape", mse_shape}, {"adv", adv}, {"kl", kl}, {"total", total}};
}

ExprObjective expr_loss(const Var& target_tex, const Var& target_b, const ExprOutputs& out,
                        const ExprLossWeights& w, const nn::PatchDiscriminator* discriminator) {
    require(out.tex.shape() == target_tex.shape() && out.b.shape() == target_b.shape(),
            ErrorCode::ShapeMismatch, "expr_loss: output and target shapes differ");
    const Var l1 = ag::l1_mean(out.tex, target_tex);
    const Var mse = ag::mse_mean(out.b, target_b);
    // Sum over latent dimensions, mean over the batch.
    const Var kl = ag::kl_standard_normal(out.mu, out.log_var);
    Var total = ag::add(ag::scale(l1, float(w.l1)), ag::scale(mse, float(w.mse)));
    total = ag::add(total, ag::scale(kl, float(w.kl)));
    ExprTerms t;
    t.l1_tex = l1.item();
    t.mse_shape = mse.item();
    t.kl = kl.item();
    if (discriminator) {
        const Var adv = nn::lsgan_generator_loss((*discriminator)(out.tex));
        total = ag::add(total, ag::scale(adv, float(w.adv)));
        t.adv = adv.item();
    }
    t.total = total.item();
    return {total, t};
}

ExprTrainResult train_expr_region(const std::vector<ExprSample>& train, const ExprConfig& config,
                                  const ExprTrainOptions& options) {
    require(!train.empty(), ErrorCode::EmptyDataset,
            "train_expr_region: no samples for region " + config.region);
    for (const auto& s : train) check_crop(config, s.tex);

    Rng init_rng(Rng::derive(config.seed, 1));
    Rng order_rng(Rng::derive(config.seed, 2));
    Rng noise_rng(Rng::derive(config.seed, 3));
    auto model = std::make_unique<ExprModel>(ExprModel{config, ExprNet(config, init_rng)});
    nn::PatchDiscriminator disc(3, config.disc_filters, init_rng);
    nn::Adam opt(model->net.params().vars(), config.lr);
    nn::Adam disc_opt(disc.params().vars(), config.lr);
    const bool adversarial = config.weights.adv > 0.0;

    std::ofstream metrics;
    std::filesystem::path ckpt;
    if (options.out_dir) {
        std::filesystem::create_directories(*options.out_dir);
        metrics.open(*options.out_dir / (config.region + "_metrics.jsonl"));
        ckpt = *options.out_dir / (config.region + ".ckpt");
    }

    const long per_epoch = (long(train.size()) + config.batch - 1) / config.batch;
    std::vector<std::size_t> order(train.size());
    ExprTrainResult result;
    long iteration = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const float lr = config.lr * std::pow(config.lr_decay, float(epoch));
        opt.set_lr(lr);
        disc_opt.set_lr(lr);
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[order_rng.uniform_int(0, int(i) - 1)]);

        for (long bi = 0; bi < per_epoch; ++bi, ++iteration) {
            std::vector<const ExprSample*> batch;
            const std::size_t lo = std::size_t(bi) * config.batch;
            for (std::size_t i = lo; i < std::min(order.size(), lo + config.batch); ++i)
                batch.push_back(&train[order[i]]);
            const Var tex = stack_tex(batch), b = stack_b(batch);
            Eigen::ArrayXf eps(batch.size() * config.latent);
            for (auto& e : eps) e = float(noise_rng.normal());

            const ExprOutputs out = model->net.forward(tex, b, eps);
            const ExprObjective obj =
                expr_loss(tex, b, out, config.weights, adversarial ? &disc : nullptr);
            try {
                for (auto [name, v] : {std::pair{"l1_tex", obj.terms.l1_tex},
                                       {"mse_shape", obj.terms.mse_shape}, {"adv", obj.terms.adv},
                                       {"kl", obj.terms.kl}, {"total", obj.terms.total}})
                    nn::check_finite(name, v);
            } catch (const Error& e) {
                fail(ErrorCode::TrainingDivergence,
                     std::string(e.what()) + " at iteration " + std::to_string(iteration) +
                         (ckpt.empty() || !std::filesystem::exists(ckpt)
                              ? std::string("; no checkpoint written yet")
                              : "; last good checkpoint: " + ckpt.string()));
            }
            opt.zero_grad();
            ag::backward(obj.total);
            opt.step();

            double d_loss = 0.0;
            if (adversarial) {
                disc.params().zero_grad();
                const Var dl = nn::lsgan_discriminator_loss(disc(tex), disc(out.tex.detach()));
                ag::backward(dl);
                disc_opt.step();
                d_loss = dl.item();
            }

            result.final_loss = obj.terms.total;
            if (metrics.is_open()) {
                auto row = obj.terms.to_json();
                row["iteration"] = iteration;
                row["epoch"] = epoch;
                row["lr"] = lr;
                row["d_loss"] = d_loss;
                metrics << row.dump() << '\n';
            }
            if (options.on_iteration) options.on_iteration(iteration, obj.terms);
        }
        if (!ckpt.empty()) save_expr(*model, ckpt);
    }
    result.iterations = iteration;
    result.model = std::move(model);
    return result;
}

ExprPair train_exprmodel(const std::filesystem::path& data_root, const ExprConfig& config,
                         const std::optional<std::filesystem::path>& out_dir) {
    ExprPair pair;
    int stream = 0;
    for (const char* region : {"mouth", "eyes"}) {
        ExprConfig c = config;
        c.region = region;
        c.seed = Rng::derive(config.seed, 100 + stream++);
        const auto samples = load_expr_samples(data_root / "expr" / (c.region + "_train.bin"));
        ExprTrainOptions opts;
        opts.out_dir = out_dir;
        (c.region == "mouth" ? pair.mouth : pair.eyes) = train_expr_region(samples, c, opts);
    }
    return pair;
}

nlohmann::json ExprEval::to_json() const {
    return {{"l1_tex", l1_tex}, {"mse_shape", mse_shape}, {"samples", samples}};
}

ExprEval evaluate_expr(const ExprModel& model, const std::vector<ExprSample>& samples) {
    require(!samples.empty(), ErrorCode::EmptyDataset, "evaluate_expr: empty set");
    ExprEval e;
    for (const auto& s : samples) {
        const LatentGaussian g = encode(model, s);
        const Decoded d = decode(model, g.mu);
        e.l1_tex += l1_value(d.tex.data(), s.tex.data());
        e.mse_shape += mse_value(d.b.array(), s.b.array());
    }
    e.samples = int(samples.size());
    e.l1_tex /= e.samples;
    e.mse_shape /= e.samples;
    return e;
}

std::unique_ptr<ExprModel> make_untrained(const ExprConfig& config) {
    Rng rng(Rng::derive(config.seed, 1));
    return std::make_unique<ExprModel>(ExprModel{config, ExprNet(config, rng)});
}

void save_expr(const ExprModel& model, const std::filesystem::path& path) {
    nn::save_checkpoint(path, "expr", model.config.to_json(), {&model.net.params()},
                        {{"flags", model.config.flags()}});
}

std::unique_ptr<ExprModel> load_expr(const std::filesystem::path& path) {
    const auto header = nn::read_checkpoint_header(path);
    const ExprConfig config = ExprConfig::from_json(header.at("config"));
    Rng rng(0);
    auto model = std::make_unique<ExprModel>(ExprModel{config, ExprNet(config, rng)});
    nn::load_checkpoint(path, "expr", {&model->net.params()});
    return model;
}

}  // namespace nh::expr
