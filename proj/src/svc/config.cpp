#include "nh/svc/config.hpp"

#include <cstdlib>
#include <fstream>

#include "nh/core/error.hpp"

namespace nh::svc {

nlohmann::json ServeConfig::to_json() const {
    return {{"port", port}, {"workers", workers}, {"thumb_size", thumb_size}};
}

ServeConfig ServeConfig::from_json(const nlohmann::json& j) {
    ServeConfig c;
    c.port = j.value("port", c.port);
    c.workers = j.value("workers", c.workers);
    c.thumb_size = j.value("thumb_size", c.thumb_size);
    require(c.port >= 0 && c.port < 65536 && c.workers >= 1 && c.thumb_size >= 0,
            ErrorCode::InvalidArgument, "serve config out of range");
    return c;
}

nlohmann::json NheadConfig::to_json() const {
    return {{"version", version},
            {"data_dir", data_dir.string()},
            {"model_dir", model_dir.string()},
            {"synth", synth.to_json()},
            {"expr", expr.to_json()},
            {"renderer", renderer.to_json()},
            {"anim", anim.to_json()},
            {"stylemap", stylemap.to_json()},
            {"style_crops", style_crops},
            {"serve", serve.to_json()}};
}

NheadConfig NheadConfig::from_json(const nlohmann::json& j) {
    require(j.is_object(), ErrorCode::BadFormat, "config must be a JSON object");
    NheadConfig c;
    c.version = j.value("version", 0);
    require(c.version == 1, ErrorCode::VersionMismatch,
            "config version " + std::to_string(c.version) + " is not supported (expected 1)");
    c.data_dir = j.value("data_dir", c.data_dir.string());
    c.model_dir = j.value("model_dir", c.model_dir.string());
    const auto section = [&](const char* key) { return j.contains(key) ? j.at(key) : nlohmann::json::object(); };
    c.synth = synth::SynthConfig::from_json(section("synth"));
    c.expr = expr::ExprConfig::from_json(section("expr"));
    c.renderer = render::RendererConfig::from_json(section("renderer"));
    c.anim = anim::AnimConfig::from_json(section("anim"));
    c.stylemap = anim::StyleMapConfig::from_json(section("stylemap"));
    c.style_crops = j.value("style_crops", c.style_crops);
    require(c.style_crops >= 2, ErrorCode::InvalidArgument, "style_crops must be at least 2");
    c.serve = ServeConfig::from_json(section("serve"));
    return c;
}

NheadConfig NheadConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(bool(in), ErrorCode::IoError, "cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::BadFormat, "config " + path.string() + ": " + e.what());
    }
    NheadConfig c = from_json(j);
    // Relative directories are taken relative to the config file.
    const auto base = path.parent_path();
    if (c.data_dir.is_relative()) c.data_dir = base / c.data_dir;
    if (c.model_dir.is_relative()) c.model_dir = base / c.model_dir;
    return c;
}

void NheadConfig::set_seed(std::uint64_t seed) {
    synth.seed = Rng::derive(seed, 0);
    expr.seed = Rng::derive(seed, 1);
    renderer.seed = Rng::derive(seed, 2);
    anim.seed = Rng::derive(seed, 3);
    stylemap.seed = Rng::derive(seed, 4);
}

std::filesystem::path NheadConfig::resolved_model_dir() const {
    if (const char* env = std::getenv(kModelDirEnv); env && *env) return env;
    return model_dir;
}

}  // namespace nh::svc
