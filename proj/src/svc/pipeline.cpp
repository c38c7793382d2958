#include "nh/svc/pipeline.hpp"

#include <algorithm>
#include <map>

#include "nh/anim/eval.hpp"
#include "nh/core/error.hpp"
#include "nh/ag/kl.hpp"
#include "nh/nn/layers.hpp"

namespace nh::svc {

namespace fs = std::filesystem;

namespace {

std::vector<anim::Take> load_takes(const fs::path& root, const std::string& split) {
    std::vector<anim::Take> out;
    for (auto& c : synth::load_anim_split(root, split)) out.push_back({std::move(c.seq), std::move(c.visemes)});
    return out;
}

void copy_into(const fs::path& from, const fs::path& to) {
    require(fs::exists(from), ErrorCode::NotFound, "missing " + from.string());
    fs::copy_file(from, to, fs::copy_options::overwrite_existing);
}

int crop_frames(double seconds) { return std::max(9, int(std::lround(seconds * kFps))); }

}  // namespace

nlohmann::json run_synthdata(const NheadConfig& config) {
    return synth::make_dataset(config.synth, config.data_dir);
}

nlohmann::json run_train_expr(const NheadConfig& config, const fs::path& model_dir) {
    fs::create_directories(model_dir / "expr");
    const expr::ExprPair r = expr::train_exprmodel(config.data_dir, config.expr, model_dir / "expr");
    return {{"mouth", {{"final_loss", r.mouth.final_loss}, {"iterations", r.mouth.iterations}}},
            {"eyes", {{"final_loss", r.eyes.final_loss}, {"iterations", r.eyes.iterations}}},
            {"final_loss", r.mouth.final_loss + r.eyes.final_loss}};
}

nlohmann::json run_train_renderer(const NheadConfig& config, const fs::path& model_dir) {
    fs::create_directories(model_dir);
    const auto train = render::load_render_dataset(config.data_dir / "render" / "train");
    const auto val = render::load_render_dataset(config.data_dir / "render" / "val");
    const auto r = render::train_renderer(train, config.renderer, {model_dir / "renderer", {}});
    render::save_renderer(*r.model, model_dir / "renderer.ckpt");
    copy_into(config.data_dir / "render" / "train" / "background" / "cam0.png", model_dir / "background.png");
    copy_into(config.data_dir / "lift.bin", model_dir / "lift.bin");
    return {{"final_loss", r.final_loss},
            {"iterations", r.iterations},
            {"val", render::evaluate_renderer(*r.model, val).to_json()}};
}

nlohmann::json run_train_anim(const NheadConfig& config, const fs::path& model_dir) {
    fs::create_directories(model_dir);
    const auto takes = load_takes(config.data_dir, "anim_train");
    const auto r = anim::train_anim(takes, config.anim, {model_dir, {}, 500});
    anim::save_anim(*r.model, model_dir / "anim.ckpt");

    const auto styles = anim::collect_styles(*r.model, takes, config.style_crops,
                                             crop_frames(config.anim.min_seconds),
                                             crop_frames(config.anim.max_seconds),
                                             Rng::derive(config.stylemap.seed, 1));
    const auto map = anim::style_map_fit(styles, config.stylemap);
    anim::save_style_map(*map.map, model_dir / "stylemap.ckpt");
    copy_into(config.data_dir / "lift.bin", model_dir / "lift.bin");

    // Reconstruction through the 2-D map against the linear baseline.
    const auto pca = anim::Pca2::fit(styles);
    double err_map = 0, err_pca = 0;
    for (const auto& z : styles) {
        err_map += (map.map->lift(map.map->project(z)) - z).squaredNorm();
        err_pca += (pca.reconstruct(z) - z).squaredNorm();
    }
    return {{"final_loss", r.final_loss},
            {"iterations", r.iterations},
            {"stylemap", {{"final_loss", map.final_loss},
                          {"recon_mse", err_map / double(styles.size())},
                          {"pca_recon_mse", err_pca / double(styles.size())}}}};
}

nlohmann::json evaluate_anim_models(const NheadConfig& config, const fs::path& model_dir) {
    const auto model = anim::load_anim(model_dir / "anim.ckpt");
    const auto val_clips = synth::load_anim_split(config.data_dir, "anim_val");
    const auto probe_clips = synth::load_anim_split(config.data_dir, "probe");
    const auto labels = synth::read_labels(config.data_dir);
    const auto label_of = [&](const std::string& name) {
        const auto it = labels.find(name);
        require(it != labels.end(), ErrorCode::NotFound, "no label for " + name);
        return it->second;
    };

    std::vector<anim::Take> val;
    for (const auto& c : val_clips) val.push_back({c.seq, c.visemes});

    // Probe clips were generated repeat-major, then style, then sentence.
    anim::ProbeSet probes;
    probes.styles = synth::kStyleCount;
    probes.contents = config.synth.probe_sentences;
    const int per_repeat = probes.styles * probes.contents;
    std::vector<VisemeSequence> sentences(probes.contents);
    for (std::size_t i = 0; i < probe_clips.size(); ++i) {
        const auto l = label_of(probe_clips[i].name);
        probes.clips.push_back({probe_clips[i].seq, probe_clips[i].visemes});
        probes.style.push_back(int(l.style));
        probes.content.push_back(l.sentence);
        probes.group.push_back(int(i) / per_repeat);
        if (sentences[l.sentence].ids.empty()) sentences[l.sentence] = probe_clips[i].visemes;
    }

    // Reference style per label: mean style mu over the validation takes.
    std::map<int, std::pair<Eigen::VectorXf, int>> acc;
    double kl = 0;
    for (const auto& c : val_clips) {
        const auto g = anim::style_encode(*model, c.seq);
        kl += gaussian_kl(g.mu.cast<double>().array(), g.log_var.cast<double>().array());
        auto& [sum, n] = acc[int(label_of(c.name).style)];
        sum = n ? Eigen::VectorXf(sum + g.mu) : g.mu;
        ++n;
    }
    std::vector<Eigen::VectorXf> refs;
    for (const auto& [s, v] : acc) refs.push_back(v.first / float(v.second));

    const auto mouth = anim::evaluate_mouth(*model, val);
    const auto dis = anim::evaluate_disentanglement(*model, probes);
    const auto con = anim::evaluate_consistency(*model, refs, sentences);
    const auto jerk = anim::evaluate_jerk(*model, val, 0.1, Rng::derive(config.anim.seed, 77));
    return {{"mouth", mouth.to_json()},
            {"disentanglement", dis.to_json()},
            {"consistency", con.to_json()},
            {"jerk", jerk.to_json()},
            {"style_kl", kl / double(val_clips.size())}};
}

// --- inference -------------------------------------------------------------

std::unique_ptr<Pipeline> Pipeline::load(const fs::path& dir) {
    for (const char* f : {"anim.ckpt", "stylemap.ckpt", "lift.bin"})
        require(fs::exists(dir / f), ErrorCode::ModelNotLoaded,
                "model directory " + dir.string() + " has no " + f);
    std::unique_ptr<Pipeline> p(new Pipeline);
    p->anim_ = anim::load_anim(dir / "anim.ckpt");
    p->map_ = anim::load_style_map(dir / "stylemap.ckpt");
    require(p->map_->style_dim() == p->anim_->config.style_dim, ErrorCode::DimensionMismatch,
            "style map and animation model disagree on the style size");
    p->lift_ = synth::Lift::load(dir / "lift.bin");
    p->versions_ = {{"anim", nn::read_checkpoint_header(dir / "anim.ckpt").at("config_hash")},
                    {"stylemap", nn::read_checkpoint_header(dir / "stylemap.ckpt").at("config_hash")}};
    if (fs::exists(dir / "renderer.ckpt")) {
        p->renderer_ = render::load_renderer(dir / "renderer.ckpt");
        p->versions_["renderer"] = nn::read_checkpoint_header(dir / "renderer.ckpt").at("config_hash");
        if (fs::exists(dir / "background.png")) p->background_ = read_png(dir / "background.png");
    }
    return p;
}

int Pipeline::style_dim() const { return anim_->config.style_dim; }

Eigen::VectorXf Pipeline::style_at(const Eigen::Vector2f& point) const {
    require(point.allFinite(), ErrorCode::InvalidArgument, "style point must be finite");
    return map_->lift(point);
}

AnimationSequence Pipeline::animate(const VisemeSequence& visemes, const Eigen::VectorXf& style) const {
    return anim::full_decode(*anim_, anim::animate(*anim_, visemes, style));
}

ImageF Pipeline::render(const AnimationFrame& frame, const ImageF* background) const {
    require(renderer_ != nullptr, ErrorCode::ModelNotLoaded, "no renderer in the model directory");
    if (!background) {
        require(background_.has_value(), ErrorCode::ModelNotLoaded, "no background plate in the model directory");
        background = &*background_;
    }
    const synth::Appearance look{background->height(), background->width(), synth::Style::Neutral};
    const synth::RenderedFrame mesh = synth::render_mesh(look, lift_.from_frame(frame));
    return render::render_frame(*renderer_, mesh.i_orig, *background, &mesh.mask).i_out;
}

nlohmann::json params_json(const AnimationSequence& seq) {
    const Eigen::MatrixXf m = seq.to_matrix();
    auto rows = [&](int off, int dim) {
        nlohmann::json a = nlohmann::json::array();
        for (Eigen::Index t = 0; t < m.rows(); ++t) {
            std::vector<float> r(dim);
            for (int d = 0; d < dim; ++d) r[d] = m(t, off + d);
            a.push_back(std::move(r));
        }
        return a;
    };
    return {{"frames", seq.size()},
            {"fps", seq.fps},
            {"mouth", rows(kMouthOffset, kExprDim)},
            {"eyes", rows(kEyesOffset, kExprDim)},
            {"pose", rows(kPoseOffset, kPoseDim)}};
}

}  // namespace nh::svc
