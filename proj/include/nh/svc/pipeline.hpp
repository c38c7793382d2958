#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include <nlohmann/json.hpp>

#include "nh/svc/config.hpp"
#include "nh/synth/puppet.hpp"

namespace nh::svc {

// Training entry points. Each reads from config.data_dir, writes into
// `model_dir` and returns a JSON summary with at least "final_loss".
nlohmann::json run_synthdata(const NheadConfig& config);
nlohmann::json run_train_expr(const NheadConfig& config, const std::filesystem::path& model_dir);
nlohmann::json run_train_renderer(const NheadConfig& config, const std::filesystem::path& model_dir);
nlohmann::json run_train_anim(const NheadConfig& config, const std::filesystem::path& model_dir);

// Validation and probe metrics of a trained animation model (reads the hidden
// labels of the dataset).
nlohmann::json evaluate_anim_models(const NheadConfig& config, const std::filesystem::path& model_dir);

// Read-only inference bundle loaded from a model directory:
//   anim.ckpt, stylemap.ckpt, lift.bin        required
//   renderer.ckpt, background.png             optional (frames need them)
class Pipeline {
public:
    static std::unique_ptr<Pipeline> load(const std::filesystem::path& model_dir);

    int style_dim() const;
    bool can_render() const { return renderer_ != nullptr; }
    nlohmann::json versions() const { return versions_; }

    Eigen::VectorXf style_at(const Eigen::Vector2f& point) const;
    const anim::StyleMap& style_map() const { return *map_; }

    AnimationSequence animate(const VisemeSequence& visemes, const Eigen::VectorXf& style) const;
    // Mesh rendering of the frame refined by the renderer over `background`
    // (the stored camera plate when null). Throws ModelNotLoaded without a renderer.
    ImageF render(const AnimationFrame& frame, const ImageF* background = nullptr) const;

private:
    Pipeline() = default;
    std::unique_ptr<anim::AnimModel> anim_;
    std::unique_ptr<anim::StyleMap> map_;
    std::unique_ptr<render::RendererModel> renderer_;
    std::optional<ImageF> background_;
    synth::Lift lift_;
    nlohmann::json versions_;
};

// Parameter traces of a sequence: {"frames", "fps", "mouth", "eyes", "pose"}.
nlohmann::json params_json(const AnimationSequence& seq);

}  // namespace nh::svc
