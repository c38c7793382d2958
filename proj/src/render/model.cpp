#include "nh/render/model.hpp"

#include <chrono>
#include <fstream>

#include "nh/eval/metrics.hpp"

namespace nh::render {
namespace {

using ag::Node;
using ag::Shape;
using ag::Var;

constexpr ag::ConvSpec kSame3{1, 1, 1, 1};
constexpr ag::ConvSpec kDown3{2, 2, 1, 1};

Shape shape_of(const Eigen::ArrayXf& a, const Shape& like) {
    require(a.size() == like.size(), ErrorCode::ShapeMismatch, "mask size mismatch");
    return like;
}

}  // namespace

int UNetConfig::channels(int level) const {
    long c = base_filters;
    for (int i = 0; i < level; ++i) c = std::min<long>(c * factor, max_filters);
    return static_cast<int>(std::min<long>(c, max_filters));
}

nlohmann::json UNetConfig::to_json() const {
    return {{"levels", levels},
            {"base_filters", base_filters},
            {"factor", factor},
            {"max_filters", max_filters}};
}

UNetConfig UNetConfig::from_json(const nlohmann::json& j) {
    UNetConfig c;
    c.levels = j.value("levels", c.levels);
    c.base_filters = j.value("base_filters", c.base_filters);
    c.factor = j.value("factor", c.factor);
    c.max_filters = j.value("max_filters", c.max_filters);
    require(c.levels >= 1 && c.levels <= 8 && c.base_filters > 0 && c.factor >= 1,
            ErrorCode::InvalidArgument, "invalid U-Net config");
    return c;
}

RendererNet::RendererNet(const UNetConfig& config, Rng& rng) : config_(config) {
    int in = 3;
    for (int l = 0; l < config.levels; ++l) {
        const int c = config.channels(l);
        const auto tag = std::to_string(l);
        enc_a_.emplace_back(params_, "enc" + tag + "a", in, c, 3, 3, l == 0 ? kSame3 : kDown3, rng);
        enc_b_.emplace_back(params_, "enc" + tag + "b", c, c, 3, 3, kSame3, rng);
        in = c;
    }
    for (int l = config.levels - 1; l >= 1; --l) {
        const int c = config.channels(l), cp = config.channels(l - 1);
        const auto tag = std::to_string(l);
        dec_up_.emplace_back(params_, "dec" + tag + "up", c, cp, 3, 3, kSame3, rng);
        dec_merge_.emplace_back(params_, "dec" + tag + "merge", 2 * cp, cp, 3, 3, kSame3, rng);
    }
    // Small head so training starts near i_corr = 0 and uniform weights.
    head_ = nn::Conv2d(params_, "head", config.channels(0), 6, 1, 1, ag::ConvSpec{1, 1, 0, 0},
                       rng, 0.1);
}

NetOutputs RendererNet::forward(const Var& x) const {
    const Shape s = x.shape();
    require(s.c == 3, ErrorCode::ShapeMismatch, "renderer input must have 3 channels");
    const int d = config_.downsampling();
    if (s.h % d != 0 || s.w % d != 0) {
        const int ph = (d - s.h % d) % d, pw = (d - s.w % d) % d;
        fail(ErrorCode::InvalidArgument,
             "input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                 " is not divisible by " + std::to_string(d) + "; pad by " + std::to_string(ph) +
                 " rows and " + std::to_string(pw) + " columns to " + std::to_string(s.h + ph) +
                 "x" + std::to_string(s.w + pw));
    }
    std::vector<Var> skips;
    Var h = x;
    for (std::size_t l = 0; l < enc_a_.size(); ++l) {
        h = ag::leaky_relu(enc_a_[l](h));
        h = ag::leaky_relu(enc_b_[l](h));
        skips.push_back(h);
    }
    for (std::size_t i = 0; i < dec_up_.size(); ++i) {
        const Var& skip = skips[skips.size() - 2 - i];
        h = ag::leaky_relu(dec_up_[i](ag::upsample(h, 2, 2)));
        h = ag::leaky_relu(dec_merge_[i](ag::concat_channels({h, skip})));
    }
    const Var raw = head_(h);
    return {ag::tanh(ag::slice_channels(raw, 0, 3)),
            ag::softmax_channels(ag::slice_channels(raw, 3, 3))};
}

RenderOutput unet_forward(const RendererNet& net, const ImageF& i_orig) {
    ag::NoGradGuard guard;
    const NetOutputs o = net.forward(nn::stack_images({&i_orig}));
    const ImageF w = nn::unstack_image(o.weights, 0);
    RenderOutput r;
    r.i_corr = nn::unstack_image(o.i_corr, 0);
    const int h = w.height(), wd = w.width();
    r.alpha = ImageF(h, wd, 1);
    r.beta = ImageF(h, wd, 1);
    r.gamma = ImageF(h, wd, 1);
    r.alpha.plane(0) = w.plane(0);
    r.beta.plane(0) = w.plane(1);
    r.gamma.plane(0) = w.plane(2);
    return r;
}

Var compose_op(const Var& i_orig, const Var& i_corr, const Var& i_backg, const Var& weights) {
    const Shape s = i_orig.shape();
    require(s.c == 3 && i_corr.shape() == s && i_backg.shape() == s &&
                weights.shape() == Shape{s.n, 3, s.h, s.w},
            ErrorCode::ShapeMismatch, "compose_op: shape mismatch");
    const Eigen::Index hw = s.plane();
    Eigen::ArrayXf y(s.size());
    const auto& o = i_orig.value();
    const auto& c = i_corr.value();
    const auto& b = i_backg.value();
    const auto& w = weights.value();
    for (int n = 0; n < s.n; ++n) {
        const Eigen::Index wb = Eigen::Index(n) * 3 * hw;
        const auto a = w.segment(wb, hw), be = w.segment(wb + hw, hw), g = w.segment(wb + 2 * hw, hw);
        for (int ch = 0; ch < 3; ++ch) {
            const Eigen::Index ib = (Eigen::Index(n) * 3 + ch) * hw;
            y.segment(ib, hw) = a * o.segment(ib, hw) +
                                be * corr_to_unit(c.segment(ib, hw)) + g * b.segment(ib, hw);
        }
    }
    return ag::make_op(s, std::move(y), {i_orig, i_corr, i_backg, weights}, [s, hw](Node& self) {
        Node& po = *self.parents[0];
        Node& pc = *self.parents[1];
        Node& pb = *self.parents[2];
        Node& pw = *self.parents[3];
        const auto& w = pw.value;
        for (int n = 0; n < s.n; ++n) {
            const Eigen::Index wb = Eigen::Index(n) * 3 * hw;
            for (int ch = 0; ch < 3; ++ch) {
                const Eigen::Index ib = (Eigen::Index(n) * 3 + ch) * hw;
                const auto g = self.grad.segment(ib, hw);
                if (po.requires_grad) po.grad_buffer().segment(ib, hw) += g * w.segment(wb, hw);
                if (pc.requires_grad)
                    pc.grad_buffer().segment(ib, hw) += 0.5f * g * w.segment(wb + hw, hw);
                if (pb.requires_grad)
                    pb.grad_buffer().segment(ib, hw) += g * w.segment(wb + 2 * hw, hw);
                if (pw.requires_grad) {
                    auto& gw = pw.grad_buffer();
                    gw.segment(wb, hw) += g * po.value.segment(ib, hw);
                    gw.segment(wb + hw, hw) += g * corr_to_unit(pc.value.segment(ib, hw));
                    gw.segment(wb + 2 * hw, hw) += g * pb.value.segment(ib, hw);
                }
            }
        }
    });
}

Var foreground_op(const Var& weights) {
    return ag::add(ag::slice_channels(weights, 0, 1), ag::slice_channels(weights, 1, 1));
}

Var mask_prior_op(const Var& f, const Eigen::ArrayXf& eroded, const Eigen::ArrayXf& dilated) {
    shape_of(eroded, f.shape());
    shape_of(dilated, f.shape());
    Eigen::ArrayXf y(1);
    y[0] = mask_prior_value(f.value(), eroded, dilated);
    return ag::make_op(Shape{}, std::move(y), {f}, [eroded, dilated](Node& self) {
        Node& p = *self.parents[0];
        if (p.requires_grad)
            p.grad_buffer() += self.grad[0] * mask_prior_grad(p.value, eroded, dilated);
    });
}

Var binarize_op(const Var& f) {
    Eigen::ArrayXf y(1);
    y[0] = binarize_value(f.value());
    return ag::make_op(Shape{}, std::move(y), {f}, [](Node& self) {
        Node& p = *self.parents[0];
        if (p.requires_grad) p.grad_buffer() += self.grad[0] * binarize_grad(p.value);
    });
}

Var refine_reg_op(const Var& i_corr) {
    Eigen::ArrayXf y(1);
    y[0] = refine_reg_value(i_corr.value());
    return ag::make_op(Shape{}, std::move(y), {i_corr}, [](Node& self) {
        Node& p = *self.parents[0];
        if (p.requires_grad) p.grad_buffer() += self.grad[0] * refine_reg_grad(p.value);
    });
}

RenderBatch make_batch(const std::vector<const RenderSample*>& samples, double mask_radius,
                       double border_sigma) {
    require(!samples.empty(), ErrorCode::EmptyDataset, "make_batch: no samples");
    std::vector<ImageF> smoothed;
    smoothed.reserve(samples.size());
    std::vector<const ImageF*> gt, orig, backg;
    for (const RenderSample* s : samples) {
        smoothed.push_back(smooth_border(s->i_orig, s->mask_m, border_sigma));
        gt.push_back(&s->frame_gt);
        backg.push_back(&s->i_backg);
    }
    for (const auto& img : smoothed) orig.push_back(&img);
    RenderBatch b{nn::stack_images(gt), nn::stack_images(orig), nn::stack_images(backg), {}, {}};
    const Eigen::Index hw = Eigen::Index(samples[0]->mask_m.height()) * samples[0]->mask_m.width();
    b.eroded.resize(hw * Eigen::Index(samples.size()));
    b.dilated.resize(b.eroded.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Plane<float> m = samples[i]->mask_m.plane(0);
        const Plane<float> e = erode_disc<float>(m, mask_radius);
        const Plane<float> d = dilate_disc<float>(m, mask_radius);
        b.eroded.segment(Eigen::Index(i) * hw, hw) = e.reshaped<Eigen::RowMajor>();
        b.dilated.segment(Eigen::Index(i) * hw, hw) = d.reshaped<Eigen::RowMajor>();
    }
    return b;
}

nlohmann::json RenderTerms::to_json() const {
    return {{"vgg", vgg},
            {"adv", adv},
            {"pri", pri},
            {"bin", bin},
            {"reg", reg},
            {"total", total},
            {"weights",
             {{"vgg", weights.vgg},
              {"adv", weights.adv},
              {"pri", weights.pri},
              {"bin", weights.bin},
              {"reg", weights.reg}}}};
}

Objective render_objective(const RenderBatch& batch, const NetOutputs& out,
                           const RenderLossWeights& w, const nn::PerceptualLoss& perceptual,
                           const nn::PatchDiscriminator* discriminator) {
    Objective o;
    o.i_out = compose_op(batch.i_orig, out.i_corr, batch.i_backg, out.weights);
    o.f = foreground_op(out.weights);

    const Var e_vgg = perceptual(o.i_out, batch.frame_gt);
    const Var e_pri = mask_prior_op(o.f, batch.eroded, batch.dilated);
    const Var e_bin = binarize_op(o.f);
    const Var e_reg = refine_reg_op(out.i_corr);

    Var total = ag::scale(e_vgg, float(w.vgg));
    total = ag::add(total, ag::scale(e_pri, float(w.pri)));
    total = ag::add(total, ag::scale(e_bin, float(w.bin)));
    total = ag::add(total, ag::scale(e_reg, float(w.reg)));
    o.terms.adv = 0.0;
    if (discriminator) {
        const Var e_adv = nn::lsgan_generator_loss((*discriminator)(o.i_out));
        total = ag::add(total, ag::scale(e_adv, float(w.adv)));
        o.terms.adv = e_adv.item();
    }
    o.terms.vgg = e_vgg.item();
    o.terms.pri = e_pri.item();
    o.terms.bin = e_bin.item();
    o.terms.reg = e_reg.item();
    o.terms.weights = w;
    o.terms.total = total.item();
    o.total = total;
    return o;
}

nlohmann::json RendererConfig::to_json() const {
    return {{"net", net.to_json()},
            {"perceptual", perceptual.to_json()},
            {"schedule", schedule.to_json()},
            {"batch", batch},
            {"lr", lr},
            {"lr_decay", lr_decay},
            {"epochs", epochs},
            {"seed", seed},
            {"disc_filters", disc_filters},
            {"mask_radius", mask_radius},
            {"border_sigma", border_sigma},
            {"augment", augment},
            {"augment_ranges",
             {{"scale_min", augment_ranges.scale_min},
              {"scale_max", augment_ranges.scale_max},
              {"max_rotation_deg", augment_ranges.max_rotation_deg},
              {"max_shift", augment_ranges.max_shift}}}};
}

RendererConfig RendererConfig::from_json(const nlohmann::json& j) {
    RendererConfig c;
    if (j.contains("net")) c.net = UNetConfig::from_json(j["net"]);
    if (j.contains("perceptual")) c.perceptual = nn::PerceptualConfig::from_json(j["perceptual"]);
    if (j.contains("schedule")) c.schedule = LossSchedule::from_json(j["schedule"]);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.lr_decay = j.value("lr_decay", c.lr_decay);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.disc_filters = j.value("disc_filters", c.disc_filters);
    c.mask_radius = j.value("mask_radius", c.mask_radius);
    c.border_sigma = j.value("border_sigma", c.border_sigma);
    c.augment = j.value("augment", c.augment);
    if (j.contains("augment_ranges")) {
        const auto& a = j["augment_ranges"];
        c.augment_ranges.scale_min = a.value("scale_min", c.augment_ranges.scale_min);
        c.augment_ranges.scale_max = a.value("scale_max", c.augment_ranges.scale_max);
        c.augment_ranges.max_rotation_deg =
            a.value("max_rotation_deg", c.augment_ranges.max_rotation_deg);
        c.augment_ranges.max_shift = a.value("max_shift", c.augment_ranges.max_shift);
    }
    require(c.batch > 0 && c.epochs > 0 && c.lr > 0, ErrorCode::InvalidArgument,
            "renderer config: batch, epochs and lr must be positive");
    return c;
}

nlohmann::json RendererConfig::deviations() const {
    const RendererConfig paper;
    nlohmann::json d = nlohmann::json::object();
    const auto mine = to_json(), ref = paper.to_json();
    for (const char* key : {"net", "schedule", "batch", "lr", "lr_decay", "epochs"}) {
        if (mine[key] != ref[key]) d[key] = {{"value", mine[key]}, {"published", ref[key]}};
    }
    if (perceptual.backend != nn::FeatureBackend::Pretrained)
        d["perceptual"] = "fixed-random-features stand-in for pretrained VGG features";
    d["unspecified_by_paper"] = {"mask_radius", "augment_ranges", "border_sigma",
                                 "perceptual layers", "mask gate vs warm-up interaction"};
    return d;
}

namespace {

double effective_radius(const RendererConfig& c, const ImageF& img) {
    return c.mask_radius >= 0 ? c.mask_radius : default_mask_radius(img.height(), img.width());
}

}  // namespace

RendererTrainResult train_renderer(const std::vector<RenderSample>& train,
                                   const RendererConfig& config,
                                   const RendererTrainOptions& options) {
    require(!train.empty(), ErrorCode::EmptyDataset, "train_renderer: empty dataset");
    for (const auto& s : train) s.validate();

    Rng init_rng(Rng::derive(config.seed, 1));
    Rng order_rng(Rng::derive(config.seed, 2));
    Rng aug_rng(Rng::derive(config.seed, 3));

    auto model = std::make_unique<RendererModel>(RendererModel{config, RendererNet(config.net, init_rng)});
    nn::PatchDiscriminator disc(3, config.disc_filters, init_rng);
    const nn::PerceptualLoss perceptual(config.perceptual);
    nn::Adam gen_opt(model->net.params().vars(), config.lr);
    nn::Adam disc_opt(disc.params().vars(), config.lr);
    const double radius = effective_radius(config, train.front().frame_gt);

    std::ofstream metrics;
    if (options.out_dir) {
        std::filesystem::create_directories(*options.out_dir);
        metrics.open(*options.out_dir / "metrics.jsonl");
        std::ofstream(*options.out_dir / "config.json")
            << nlohmann::json{{"config", config.to_json()}, {"deviations", config.deviations()}}
                   .dump(2);
    }

    const long per_epoch = (long(train.size()) + config.batch - 1) / config.batch;
    std::vector<std::size_t> order(train.size());
    RendererTrainResult result;
    long iteration = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const float lr = config.lr * std::pow(config.lr_decay, float(epoch));
        gen_opt.set_lr(lr);
        disc_opt.set_lr(lr);
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[order_rng.uniform_int(0, int(i) - 1)]);

        for (long b = 0; b < per_epoch; ++b, ++iteration) {
            std::vector<RenderSample> local;
            const std::size_t lo = std::size_t(b) * config.batch;
            const std::size_t hi = std::min(order.size(), lo + config.batch);
            for (std::size_t i = lo; i < hi; ++i) {
                local.push_back(config.augment ? augment(train[order[i]], aug_rng, config.augment_ranges)
                                               : train[order[i]]);
            }
            std::vector<const RenderSample*> ptrs;
            for (const auto& s : local) ptrs.push_back(&s);
            const RenderBatch batch = make_batch(ptrs, radius, config.border_sigma);

            const double epoch_pos = double(iteration) / double(per_epoch);
            const RenderLossWeights w = loss_schedule(iteration, epoch_pos, config.schedule);
            const bool adversarial = w.adv > 0.0;

            const NetOutputs out = model->net.forward(batch.i_orig);
            const Objective obj =
                render_objective(batch, out, w, perceptual, adversarial ? &disc : nullptr);
            nn::check_finite("total", obj.terms.total);
            for (auto [name, v] : {std::pair{"vgg", obj.terms.vgg}, {"adv", obj.terms.adv},
                                   {"pri", obj.terms.pri}, {"bin", obj.terms.bin},
                                   {"reg", obj.terms.reg}})
                nn::check_finite(name, v);

            gen_opt.zero_grad();
            ag::backward(obj.total);
            gen_opt.step();

            // The critic trains from the start so it is useful once its weight
            // ramps in.
            disc.params().zero_grad();
            const Var fake = obj.i_out.detach();
            const Var d_loss = nn::lsgan_discriminator_loss(disc(batch.frame_gt), disc(fake));
            ag::backward(d_loss);
            disc_opt.step();

            result.final_loss = obj.terms.total;
            if (metrics.is_open()) {
                auto row = obj.terms.to_json();
                row["iteration"] = iteration;
                row["epoch"] = epoch_pos;
                row["lr"] = lr;
                row["d_loss"] = d_loss.item();
                metrics << row.dump() << '\n';
            }
            if (options.on_iteration) options.on_iteration(iteration, obj.terms);
        }
        if (options.out_dir) save_renderer(*model, *options.out_dir / "renderer.ckpt");
    }
    result.iterations = iteration;
    result.model = std::move(model);
    return result;
}

void save_renderer(const RendererModel& model, const std::filesystem::path& path) {
    nn::save_checkpoint(path, "renderer", model.config.to_json(), {&model.net.params()},
                        {{"deviations", model.config.deviations()}});
}

std::unique_ptr<RendererModel> load_renderer(const std::filesystem::path& path) {
    const auto header = nn::read_checkpoint_header(path);
    const RendererConfig config = RendererConfig::from_json(header.at("config"));
    Rng rng(0);
    auto model = std::make_unique<RendererModel>(RendererModel{config, RendererNet(config.net, rng)});
    nn::load_checkpoint(path, "renderer", {&model->net.params()});
    return model;
}

FrameResult render_frame(const RendererModel& model, const ImageF& i_orig,
                         const ImageF& i_backg_new, const ImageF* mask_m) {
    require(i_orig.same_shape(i_backg_new), ErrorCode::ShapeMismatch,
            "render_frame: background shape differs from the rendering");
    const auto t0 = std::chrono::steady_clock::now();
    const ImageF input = mask_m ? smooth_border(i_orig, *mask_m, model.config.border_sigma) : i_orig;
    FrameResult r;
    r.raw = unet_forward(model.net, input);
    r.i_out = compose(input, r.raw.i_corr, i_backg_new, r.raw.alpha, r.raw.beta, r.raw.gamma);
    r.f = foreground(r.raw.alpha, r.raw.beta);
    r.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

nlohmann::json RenderEval::to_json() const {
    return {{"psnr_refined", psnr_refined},
            {"psnr_orig", psnr_orig},
            {"psnr_naive", psnr_naive},
            {"l1_refined", l1_refined},
            {"ssim_refined", ssim_refined},
            {"binarization_ratio", binarization_ratio},
            {"samples", samples}};
}

RenderEval evaluate_renderer(const RendererModel& model, const std::vector<RenderSample>& val) {
    require(!val.empty(), ErrorCode::EmptyDataset, "evaluate_renderer: empty set");
    RenderEval e;
    Eigen::Index in_band = 0, total = 0;
    for (const auto& s : val) {
        const FrameResult r = render_frame(model, s.i_orig, s.i_backg, &s.mask_m);
        ImageF naive(s.i_orig.height(), s.i_orig.width(), 3);
        for (int c = 0; c < 3; ++c)
            naive.plane(c) = s.mask_m.plane(0) * s.i_orig.plane(c) +
                             (1.0f - s.mask_m.plane(0)) * s.i_backg.plane(c);
        e.psnr_refined += eval::psnr(r.i_out, s.frame_gt);
        e.psnr_orig += eval::psnr(s.i_orig, s.frame_gt);
        e.psnr_naive += eval::psnr(naive, s.frame_gt);
        e.l1_refined += eval::l1(r.i_out, s.frame_gt);
        e.ssim_refined += eval::ssim(r.i_out, s.frame_gt);
        in_band += ((r.f.data() > 0.1f) && (r.f.data() < 0.9f)).count();
        total += r.f.data().size();
    }
    const double n = double(val.size());
    e.psnr_refined /= n;
    e.psnr_orig /= n;
    e.psnr_naive /= n;
    e.l1_refined /= n;
    e.ssim_refined /= n;
    e.binarization_ratio = double(in_band) / double(total);
    e.samples = static_cast<int>(val.size());
    return e;
}

std::vector<RenderSample> load_render_dataset(const std::filesystem::path& dir,
                                              const std::string& camera) {
    namespace fs = std::filesystem;
    const fs::path bg_path = dir / "background" / (camera + ".png");
    require(fs::exists(bg_path), ErrorCode::NotFound, "missing background " + bg_path.string());
    const ImageF background = read_png(bg_path);
    std::vector<fs::path> frames;
    for (const auto& e : fs::directory_iterator(dir / "frames"))
        if (e.path().extension() == ".png") frames.push_back(e.path());
    std::sort(frames.begin(), frames.end());
    require(!frames.empty(), ErrorCode::EmptyDataset, "no frames in " + dir.string());
    std::vector<RenderSample> out;
    out.reserve(frames.size());
    for (const auto& f : frames) {
        const auto name = f.filename();
        RenderSample s{read_png(f), read_png(dir / "mesh" / name), background,
                       read_png(dir / "mask" / name)};
        // Masks are stored as 8-bit; snap to {0,1}.
        s.mask_m.data() = (s.mask_m.data() > 0.5f).cast<float>();
        s.validate();
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace nh::render
