#pragma once

#include <filesystem>
#include <optional>

#include <nlohmann/json.hpp>

#include "nh/anim/model.hpp"
#include "nh/anim/stylemap.hpp"
#include "nh/expr/model.hpp"
#include "nh/render/model.hpp"
#include "nh/synth/dataset.hpp"

namespace nh::svc {

inline constexpr const char* kModelDirEnv = "NHEAD_MODEL_DIR";

struct ServeConfig {
    int port = 8080;
    int workers = 1;     // render workers
    int thumb_size = 0;  // 0: renderer resolution
    nlohmann::json to_json() const;
    static ServeConfig from_json(const nlohmann::json& j);
};

// One versioned file configures every command. Missing sections keep their
// defaults; unknown keys are ignored.
struct NheadConfig {
    int version = 1;
    std::filesystem::path data_dir = "data/synth";
    std::filesystem::path model_dir = "models";
    synth::SynthConfig synth;
    expr::ExprConfig expr;
    render::RendererConfig renderer;
    anim::AnimConfig anim;
    anim::StyleMapConfig stylemap;
    int style_crops = 400;  // crops encoded to fit the style map
    ServeConfig serve;

    nlohmann::json to_json() const;
    static NheadConfig from_json(const nlohmann::json& j);
    static NheadConfig load(const std::filesystem::path& path);

    // Reseeds every stage from one value (independent derived streams).
    void set_seed(std::uint64_t seed);
    // model_dir unless the environment variable overrides it.
    std::filesystem::path resolved_model_dir() const;
};

}  // namespace nh::svc
