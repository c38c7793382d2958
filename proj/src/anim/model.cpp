#include "nh/anim/model.hpp"

#include <cmath>
#include <fstream>

#include "nh/core/error.hpp"
#include "nh/core/visemes.hpp"

namespace nh::anim {
namespace {

using ag::Shape;
using ag::Var;

int ceil_div(int a, int b) { return (a + b - 1) / b; }

// T x C matrices (column-major) laid out as {N, C, 1, T}.
Var seq_constant(const std::vector<Eigen::MatrixXf>& mats) {
    const int n = int(mats.size());
    const int t = int(mats.front().rows()), c = int(mats.front().cols());
    Eigen::ArrayXf v(Eigen::Index(n) * c * t);
    for (int i = 0; i < n; ++i)
        v.segment(Eigen::Index(i) * c * t, Eigen::Index(c) * t) =
            Eigen::Map<const Eigen::ArrayXf>(mats[i].data(), mats[i].size());
    return Var::constant(Shape{n, c, 1, t}, std::move(v));
}

Eigen::MatrixXf seq_matrix(const Var& v, int index) {
    const Shape s = v.shape();
    const Eigen::Index block = Eigen::Index(s.c) * s.w;
    return Eigen::Map<const Eigen::MatrixXf>(v.value().data() + index * block, s.w, s.c);
}

Eigen::MatrixXf pad_rows(const Eigen::MatrixXf& m, int rows) {
    Eigen::MatrixXf out(rows, m.cols());
    out.topRows(m.rows()) = m;
    for (int r = int(m.rows()); r < rows; ++r) out.row(r) = m.row(m.rows() - 1);
    return out;
}

Eigen::ArrayXf normal_noise(Eigen::Index n, Rng& rng) {
    Eigen::ArrayXf e(n);
    for (auto& v : e) v = float(rng.normal());
    return e;
}

int part_offset(Part p) { return p == Part::Eyes ? kEyesOffset : kPoseOffset; }
int part_dim(Part p) { return p == Part::Eyes ? kExprDim : kPoseDim; }

nn::Conv2d seq_conv(nn::ParamSet& ps, const std::string& name, int in, int out, int kernel,
                    int stride, int pad, Rng& rng, double gain = 1.0) {
    return nn::Conv2d(ps, name, in, out, 1, kernel, ag::ConvSpec{1, stride, 0, pad}, rng, gain);
}

}  // namespace

std::string part_name(Part p) { return p == Part::Eyes ? "eyes" : "pose"; }

// --- standardisation -------------------------------------------------------

Standardizer Standardizer::fit(const std::vector<Take>& takes) {
    require(!takes.empty(), ErrorCode::EmptyDataset, "Standardizer::fit: no takes");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(kFrameDim), sq = Eigen::VectorXd::Zero(kFrameDim);
    double count = 0;
    for (const auto& t : takes) {
        const Eigen::MatrixXd m = t.seq.to_matrix().cast<double>();
        sum += m.colwise().sum().transpose();
        sq += m.array().square().colwise().sum().matrix().transpose();
        count += double(m.rows());
    }
    Standardizer s;
    const Eigen::VectorXd mean = sum / count;
    const Eigen::VectorXd var = (sq / count - mean.array().square().matrix()).cwiseMax(0.0);
    s.mean = mean.cast<float>();
    for (int i = 0; i < kFrameDim; ++i) s.scale[i] = var[i] > 1e-12 ? float(std::sqrt(var[i])) : 1.0f;
    return s;
}

Eigen::MatrixXf Standardizer::apply(const Eigen::MatrixXf& x, int offset) const {
    const Eigen::Index d = x.cols();
    return (x.rowwise() - mean.segment(offset, d).transpose()).array().rowwise() /
           scale.segment(offset, d).transpose().array();
}

Eigen::MatrixXf Standardizer::invert(const Eigen::MatrixXf& x, int offset) const {
    const Eigen::Index d = x.cols();
    Eigen::MatrixXf out = x.array().rowwise() * scale.segment(offset, d).transpose().array();
    return out.rowwise() + mean.segment(offset, d).transpose();
}

// --- networks ------------------------------------------------------------

Vsae::Vsae(int dim, int depth, int filters, int latent, Rng& rng) : dim_(dim), depth_(depth) {
    int in = dim;
    for (int i = 0; i < depth; ++i) {
        enc_.push_back(seq_conv(params_, "enc" + std::to_string(i), in, filters, 3, 1, 1, rng));
        in = filters;
    }
    mu_ = seq_conv(params_, "mu", filters, latent, 3, 1, 1, rng, 0.5);
    log_var_ = seq_conv(params_, "log_var", filters, latent, 3, 1, 1, rng, 0.1);
    in = latent;
    for (int i = 0; i < depth; ++i) {
        dec_.push_back(seq_conv(params_, "dec" + std::to_string(i), in, filters, 3, 1, 1, rng));
        in = filters;
    }
    out_ = seq_conv(params_, "out", filters, dim, 3, 1, 1, rng, 0.5);
}

std::pair<Var, Var> Vsae::encode(const Var& x) const {
    const Shape s = x.shape();
    require(s.c == dim_ && s.h == 1, ErrorCode::ShapeMismatch,
            "VSAE expects {N," + std::to_string(dim_) + ",1,T}, got " + s.str());
    require(s.w % (1 << depth_) == 0, ErrorCode::InvalidArgument,
            "VSAE input length " + std::to_string(s.w) + " is not a multiple of " +
                std::to_string(1 << depth_));
    Var h = x;
    for (const auto& conv : enc_) h = ag::avg_pool(ag::leaky_relu(conv(h)), 1, 2);
    return {mu_(h), ag::clamp(log_var_(h), -10.0f, 10.0f)};
}

Var Vsae::decode(const Var& z) const {
    Var h = z;
    for (const auto& conv : dec_) h = ag::leaky_relu(conv(ag::upsample(h, 1, 2)));
    return out_(h);
}

StyleEncoder::StyleEncoder(int layers, int filters, int style_dim, Rng& rng) {
    int in = kFrameDim;
    for (int i = 0; i < layers; ++i) {
        convs_.push_back(seq_conv(params_, "conv" + std::to_string(i), in, filters, 9, 1, 4, rng));
        in = filters;
    }
    mu_ = nn::Linear(params_, "mu", filters, style_dim, rng, 0.5);
    log_var_ = nn::Linear(params_, "log_var", filters, style_dim, rng, 0.1);
}

std::pair<Var, Var> StyleEncoder::operator()(const Var& x) const {
    const Shape s = x.shape();
    require(s.c == kFrameDim && s.h == 1, ErrorCode::ShapeMismatch,
            "style encoder expects {N,518,1,T}, got " + s.str());
    require(s.w >= 9, ErrorCode::InvalidArgument,
            "style encoder needs at least 9 frames, got " + std::to_string(s.w));
    Var h = x;
    for (const auto& conv : convs_) h = ag::leaky_relu(conv(h));
    h = ag::mean_hw(h);
    return {mu_(h), ag::clamp(log_var_(h), -10.0f, 10.0f)};
}

AnimNet::AnimNet(int visemes, int embed, int style_dim, int filters, int blocks, int eye_stride,
                 int pose_stride, int latent, Rng& rng) {
    Eigen::ArrayXf t(Eigen::Index(visemes) * embed);
    for (auto& v : t) v = float(rng.normal());
    table_ = params_.add("embedding", Shape{visemes, embed, 1, 1}, std::move(t));
    input_ = seq_conv(params_, "input", embed + style_dim, filters, 9, 1, 4, rng);
    for (int b = 0; b < blocks; ++b) {
        blocks_a_.push_back(seq_conv(params_, "block" + std::to_string(b) + "a", filters, filters, 9, 1, 4, rng));
        blocks_b_.push_back(seq_conv(params_, "block" + std::to_string(b) + "b", filters, filters, 9, 1, 4, rng, 0.3));
    }
    mouth_ = seq_conv(params_, "mouth", filters, kExprDim, 9, 1, 4, rng, 0.5);
    eyes_ = seq_conv(params_, "eyes", filters, latent, 2 * eye_stride, eye_stride, eye_stride / 2, rng, 0.5);
    pose_ = seq_conv(params_, "pose", filters, latent, 2 * pose_stride, pose_stride, pose_stride / 2, rng, 0.5);
}

AnimNetOutputs AnimNet::forward(std::span<const int> ids, int n, int tp, const Var& style) const {
    const Var emb = ag::embedding(ids, n, tp, table_);
    Var h = ag::leaky_relu(input_(ag::concat_channels({emb, ag::broadcast_width(style, tp)})));
    for (std::size_t b = 0; b < blocks_a_.size(); ++b)
        h = ag::leaky_relu(ag::add(h, blocks_b_[b](ag::leaky_relu(blocks_a_[b](h)))));
    return {mouth_(h), eyes_(h), pose_(h)};
}

// --- config ----------------------------------------------------------------

nlohmann::json AnimConfig::to_json() const {
    return {{"version", version},
            {"filters", filters},
            {"latent", latent},
            {"style_dim", style_dim},
            {"embed", embed},
            {"res_blocks", res_blocks},
            {"style_layers", style_layers},
            {"eye_depth", eye_depth},
            {"pose_depth", pose_depth},
            {"batch", batch},
            {"lr_prior", lr_prior},
            {"lr_anim", lr_anim},
            {"lr_gamma", lr_gamma},
            {"decay_every", decay_every},
            {"iterations", iterations},
            {"lambda_prior", lambda_prior},
            {"lambda_style", lambda_style},
            {"min_seconds", min_seconds},
            {"max_seconds", max_seconds},
            {"seed", seed}};
}

AnimConfig AnimConfig::from_json(const nlohmann::json& j) {
    AnimConfig c;
    c.version = j.value("version", c.version);
    require(c.version == 1, ErrorCode::VersionMismatch,
            "animation config version " + std::to_string(c.version) + " is not supported");
    c.filters = j.value("filters", c.filters);
    c.latent = j.value("latent", c.latent);
    c.style_dim = j.value("style_dim", c.style_dim);
    c.embed = j.value("embed", c.embed);
    c.res_blocks = j.value("res_blocks", c.res_blocks);
    c.style_layers = j.value("style_layers", c.style_layers);
    c.eye_depth = j.value("eye_depth", c.eye_depth);
    c.pose_depth = j.value("pose_depth", c.pose_depth);
    c.batch = j.value("batch", c.batch);
    c.lr_prior = j.value("lr_prior", c.lr_prior);
    c.lr_anim = j.value("lr_anim", c.lr_anim);
    c.lr_gamma = j.value("lr_gamma", c.lr_gamma);
    c.decay_every = j.value("decay_every", c.decay_every);
    c.iterations = j.value("iterations", c.iterations);
    c.lambda_prior = j.value("lambda_prior", c.lambda_prior);
    c.lambda_style = j.value("lambda_style", c.lambda_style);
    c.min_seconds = j.value("min_seconds", c.min_seconds);
    c.max_seconds = j.value("max_seconds", c.max_seconds);
    c.seed = j.value("seed", c.seed);
    require(c.filters > 0 && c.latent > 0 && c.style_dim > 0 && c.embed > 0 && c.res_blocks >= 0 &&
                c.style_layers >= 1 && c.eye_depth >= 1 && c.pose_depth >= c.eye_depth &&
                c.batch > 0 && c.iterations > 0 && c.decay_every > 0 && c.min_seconds > 0 &&
                c.max_seconds >= c.min_seconds,
            ErrorCode::InvalidArgument, "animation config out of range");
    return c;
}

nlohmann::json AnimConfig::deviations() const {
    const AnimConfig paper;
    nlohmann::json d = nlohmann::json::object();
    const auto mine = to_json(), ref = paper.to_json();
    for (const char* key : {"filters", "latent", "style_dim", "eye_depth", "pose_depth", "batch",
                            "lr_prior", "lr_anim", "lr_gamma", "iterations", "lambda_prior",
                            "lambda_style", "min_seconds", "max_seconds"}) {
        if (mine[key] != ref[key]) d[key] = {{"value", mine[key]}, {"published", ref[key]}};
    }
    d["unspecified_by_paper"] = {"res_blocks", "style_layers", "embed", "decay_every",
                                 "standardisation", "style injection"};
    return d;
}

AnimModel::AnimModel(const AnimConfig& c, Rng& rng)
    : config(c),
      eyes(kExprDim, c.eye_depth, c.filters, c.latent, rng),
      pose(kPoseDim, c.pose_depth, c.filters, c.latent, rng),
      style(c.style_layers, c.filters, c.style_dim, rng),
      net(VisemeTable::builtin().viseme_count(), c.embed, c.style_dim, c.filters, c.res_blocks,
          1 << c.eye_depth, 1 << c.pose_depth, c.latent, rng) {}

// --- inference -------------------------------------------------------------

VsaeEncoding vsae_encode(const AnimModel& model, Part part, const Eigen::MatrixXf& x_part, Rng* rng) {
    const int stride = model.stride(part);
    require(x_part.cols() == part_dim(part), ErrorCode::ShapeMismatch,
            part_name(part) + " sequence must have " + std::to_string(part_dim(part)) + " columns");
    require(x_part.rows() >= stride, ErrorCode::InvalidArgument,
            part_name(part) + " prior needs at least " + std::to_string(stride) + " frames, got " +
                std::to_string(x_part.rows()));
    ag::NoGradGuard guard;
    const int tp = ceil_div(int(x_part.rows()), stride) * stride;
    const Eigen::MatrixXf x = pad_rows(model.norm.apply(x_part, part_offset(part)), tp);
    const auto [mu, lv] = model.vsae(part).encode(seq_constant({x}));
    VsaeEncoding e{seq_matrix(mu, 0), seq_matrix(lv, 0), {}};
    if (rng) {
        const Eigen::ArrayXf eps = normal_noise(e.mu.size(), *rng);
        e.draw = e.mu.array() + (0.5f * e.log_var.array()).exp() *
                                    Eigen::Map<const Eigen::ArrayXXf>(eps.data(), e.mu.rows(), e.mu.cols());
    } else {
        e.draw = e.mu;
    }
    return e;
}

Eigen::MatrixXf vsae_decode(const AnimModel& model, Part part, const Eigen::MatrixXf& z) {
    require(z.cols() == model.config.latent && z.rows() > 0, ErrorCode::ShapeMismatch,
            part_name(part) + " latent must be L x " + std::to_string(model.config.latent));
    ag::NoGradGuard guard;
    const Var x = model.vsae(part).decode(seq_constant({z}));
    return model.norm.invert(seq_matrix(x, 0), part_offset(part));
}

StyleGaussian style_encode(const AnimModel& model, const Eigen::MatrixXf& x) {
    require(x.cols() == kFrameDim, ErrorCode::DimensionMismatch,
            "style_encode expects T x 518 parameters");
    ag::NoGradGuard guard;
    const auto [mu, lv] = model.style(seq_constant({model.norm.apply(x)}));
    return {mu.value().matrix(), lv.value().matrix()};
}

AnimOutput animate(const AnimModel& model, const VisemeSequence& visemes,
                   const Eigen::VectorXf& z_style) {
    const int t = visemes.size();
    require(t > 0, ErrorCode::InvalidArgument, "animate: empty viseme sequence");
    require(z_style.size() == model.config.style_dim, ErrorCode::DimensionMismatch,
            "style vector must have " + std::to_string(model.config.style_dim) + " entries, got " +
                std::to_string(z_style.size()));
    const int es = model.stride(Part::Eyes), ps = model.stride(Part::Pose);
    const int tp = ceil_div(t, ps) * ps;
    std::vector<int> ids = visemes.ids;
    ids.resize(tp, kIdleViseme);
    ag::NoGradGuard guard;
    const Var style = Var::constant(Shape{1, int(z_style.size()), 1, 1}, Eigen::ArrayXf(z_style.array()));
    const AnimNetOutputs o = model.net.forward(ids, 1, tp, style);
    AnimOutput out;
    out.frames = t;
    out.x_mouth = model.norm.invert(seq_matrix(o.mouth, 0).topRows(t), kMouthOffset);
    out.z_eyes = seq_matrix(o.eyes, 0).topRows(ceil_div(t, es));
    out.z_pose = seq_matrix(o.pose, 0).topRows(ceil_div(t, ps));
    return out;
}

AnimationSequence full_decode(const AnimModel& model, const AnimOutput& out) {
    const int t = out.frames;
    require(out.x_mouth.rows() == t && out.z_eyes.rows() == ceil_div(t, model.stride(Part::Eyes)) &&
                out.z_pose.rows() == ceil_div(t, model.stride(Part::Pose)),
            ErrorCode::ShapeMismatch, "full_decode: inconsistent output lengths");
    Eigen::MatrixXf m(t, kFrameDim);
    m.middleCols(kMouthOffset, kExprDim) = out.x_mouth;
    m.middleCols(kEyesOffset, kExprDim) = vsae_decode(model, Part::Eyes, out.z_eyes).topRows(t);
    m.middleCols(kPoseOffset, kPoseDim) = vsae_decode(model, Part::Pose, out.z_pose).topRows(t);
    return AnimationSequence::from_matrix(m);
}

// --- losses ---------------------------------------------------------------

std::pair<Var, VsaeTerms> vsae_loss(const Var& x, const Var& x_hat, const Var& mu,
                                     const Var& log_var, double lambda) {
    const Var mse = ag::mse_mean(x_hat, x);
    const Var kl = ag::kl_standard_normal(mu, log_var);
    const Var total = ag::add(mse, ag::scale(kl, float(lambda)));
    return {total, {mse.item(), kl.item(), total.item()}};
}

nlohmann::json AnimTerms::to_json() const {
    return {{"mouth", mouth}, {"eyes", eyes}, {"pose", pose}, {"kl", kl}, {"total", total}};
}

std::pair<Var, AnimTerms> anim_loss(const Var& mouth, const Var& mouth_target, const Var& eyes,
                                     const Var& eyes_target, const Var& pose,
                                     const Var& pose_target, const Var& style_mu,
                                     const Var& style_log_var, double lambda) {
    const Var m = ag::mse_mean(mouth, mouth_target);
    const Var e = ag::mse_mean(eyes, eyes_target);
    const Var p = ag::mse_mean(pose, pose_target);
    const Var kl = ag::kl_standard_normal(style_mu, style_log_var);
    const Var total = ag::add(ag::add(m, e), ag::add(p, ag::scale(kl, float(lambda))));
    return {total, {m.item(), e.item(), p.item(), kl.item(), total.item()}};
}

// --- training ---------------------------------------------------------------

AnimTrainResult train_anim(const std::vector<Take>& train, const AnimConfig& config,
                           const AnimTrainOptions& options) {
    require(!train.empty(), ErrorCode::EmptyDataset, "train_anim: no takes");
    const int ps = 1 << config.pose_depth, es = 1 << config.eye_depth;
    const int shortest = [&] {
        int s = train.front().seq.size();
        for (const auto& t : train) {
            require(t.seq.size() == t.visemes.size(), ErrorCode::ShapeMismatch,
                    "take has " + std::to_string(t.seq.size()) + " frames but " +
                        std::to_string(t.visemes.size()) + " visemes");
            s = std::min(s, t.seq.size());
        }
        return s;
    }();
    const int min_len = std::max(ps, int(std::ceil(config.min_seconds * kFps)));
    const int max_len = std::min(shortest, int(std::floor(config.max_seconds * kFps)));
    require(max_len >= min_len, ErrorCode::InvalidArgument,
            "takes are shorter than the minimum crop of " + std::to_string(min_len) + " frames");

    Rng init_rng(Rng::derive(config.seed, 1));
    Rng crop_rng(Rng::derive(config.seed, 2));
    Rng noise_rng(Rng::derive(config.seed, 3));
    auto model = std::make_unique<AnimModel>(config, init_rng);
    model->norm = Standardizer::fit(train);

    std::vector<Eigen::MatrixXf> normed;
    for (const auto& t : train) normed.push_back(model->norm.apply(t.seq.to_matrix()));

    nn::Adam eyes_opt(model->eyes.params().vars(), config.lr_prior);
    nn::Adam pose_opt(model->pose.params().vars(), config.lr_prior);
    std::vector<Var> anim_vars = model->net.params().vars();
    for (const auto& v : model->style.params().vars()) anim_vars.push_back(v);
    nn::Adam anim_opt(anim_vars, config.lr_anim);

    std::ofstream metrics;
    if (options.out_dir) {
        std::filesystem::create_directories(*options.out_dir);
        metrics.open(*options.out_dir / "anim_metrics.jsonl");
    }

    AnimTrainResult result;
    for (long it = 0; it < config.iterations; ++it) {
        const float decay = std::pow(config.lr_gamma, float(it / config.decay_every));
        eyes_opt.set_lr(config.lr_prior * decay);
        pose_opt.set_lr(config.lr_prior * decay);
        anim_opt.set_lr(config.lr_anim * decay);

        // Random crops of one shared length.
        const int t = crop_rng.uniform_int(min_len, max_len);
        const int tp = ceil_div(t, ps) * ps;
        std::vector<Eigen::MatrixXf> crops, padded;
        std::vector<int> ids;
        for (int b = 0; b < config.batch; ++b) {
            const int k = crop_rng.uniform_int(0, int(train.size()) - 1);
            const int start = crop_rng.uniform_int(0, train[k].seq.size() - t);
            crops.push_back(normed[k].middleRows(start, t));
            padded.push_back(pad_rows(crops.back(), tp));
            for (int i = 0; i < tp; ++i)
                ids.push_back(i < t ? train[k].visemes.ids[start + i] : kIdleViseme);
        }
        const Var x = seq_constant(crops), xp = seq_constant(padded);

        AnimStep step;
        step.iteration = it;
        step.length = t;

        // Priors: independent autoencoders on the padded crops.
        for (Part part : {Part::Eyes, Part::Pose}) {
            const Vsae& vsae = model->vsae(part);
            const Var xs = ag::slice_channels(xp, part_offset(part), part_dim(part));
            const auto [mu, lv] = vsae.encode(xs);
            const Var z = ag::reparameterize(mu, lv, normal_noise(mu.size(), noise_rng));
            auto [loss, terms] = vsae_loss(xs, vsae.decode(z), mu, lv, config.lambda_prior);
            nn::check_finite(part_name(part) + " prior", terms.total);
            auto& opt = part == Part::Eyes ? eyes_opt : pose_opt;
            opt.zero_grad();
            ag::backward(loss);
            opt.step();
            (part == Part::Eyes ? step.eyes : step.pose) = terms;
        }

        // Frozen prior encodings as targets.
        Var z_eyes, z_pose;
        {
            ag::NoGradGuard guard;
            z_eyes = ag::slice_width(
                model->eyes.encode(ag::slice_channels(xp, kEyesOffset, kExprDim)).first, 0, ceil_div(t, es));
            z_pose = ag::slice_width(
                model->pose.encode(ag::slice_channels(xp, kPoseOffset, kPoseDim)).first, 0, ceil_div(t, ps));
        }

        const auto [s_mu, s_lv] = model->style(x);
        const Var style = ag::reparameterize(s_mu, s_lv, normal_noise(s_mu.size(), noise_rng));
        const AnimNetOutputs o = model->net.forward(ids, config.batch, tp, style);
        auto [loss, terms] = anim_loss(
            ag::slice_width(o.mouth, 0, t), ag::slice_channels(x, kMouthOffset, kExprDim),
            ag::slice_width(o.eyes, 0, ceil_div(t, es)), z_eyes,
            ag::slice_width(o.pose, 0, ceil_div(t, ps)), z_pose, s_mu, s_lv, config.lambda_style);
        for (auto [name, v] : {std::pair{"mouth", terms.mouth}, {"eyes", terms.eyes},
                               {"pose", terms.pose}, {"style kl", terms.kl}})
            nn::check_finite(name, v);
        anim_opt.zero_grad();
        ag::backward(loss);
        anim_opt.step();
        step.anim = terms;

        result.final_loss = terms.total;
        if (metrics.is_open()) {
            nlohmann::json row = {{"iteration", it},
                                  {"length", t},
                                  {"lr_anim", config.lr_anim * decay},
                                  {"anim", terms.to_json()},
                                  {"eyes_prior", {{"mse", step.eyes.mse}, {"kl", step.eyes.kl}}},
                                  {"pose_prior", {{"mse", step.pose.mse}, {"kl", step.pose.kl}}}};
            metrics << row.dump() << '\n';
        }
        if (options.on_iteration) options.on_iteration(step);
        if (options.out_dir && ((it + 1) % options.checkpoint_every == 0 || it + 1 == config.iterations))
            save_anim(*model, *options.out_dir / "anim.ckpt");
    }
    result.iterations = config.iterations;
    result.model = std::move(model);
    return result;
}

// --- persistence -------------------------------------------------------------

void save_anim(const AnimModel& model, const std::filesystem::path& path) {
    nn::ParamSet norm;
    norm.add("mean", Shape{kFrameDim, 1, 1, 1}, model.norm.mean.array());
    norm.add("scale", Shape{kFrameDim, 1, 1, 1}, model.norm.scale.array());
    nn::save_checkpoint(path, "anim", model.config.to_json(),
                        {&norm, &model.eyes.params(), &model.pose.params(), &model.style.params(),
                         &model.net.params()},
                        {{"deviations", model.config.deviations()}});
}

std::unique_ptr<AnimModel> load_anim(const std::filesystem::path& path) {
    const auto header = nn::read_checkpoint_header(path);
    const AnimConfig config = AnimConfig::from_json(header.at("config"));
    Rng rng(0);
    auto model = std::make_unique<AnimModel>(config, rng);
    nn::ParamSet norm;
    norm.add("mean", Shape{kFrameDim, 1, 1, 1}, Eigen::ArrayXf::Zero(kFrameDim));
    norm.add("scale", Shape{kFrameDim, 1, 1, 1}, Eigen::ArrayXf::Ones(kFrameDim));
    nn::load_checkpoint(path, "anim",
                        {&norm, &model->eyes.params(), &model->pose.params(), &model->style.params(),
                         &model->net.params()});
    model->norm.mean = norm.all()[0].var.value().matrix();
    model->norm.scale = norm.all()[1].var.value().matrix();
    return model;
}

}  // namespace nh::anim
