#include "nh/synth/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "nh/core/anim_io.hpp"
#include "nh/core/error.hpp"
#include "nh/core/visemes.hpp"

namespace nh::synth {
namespace fs = std::filesystem;

namespace {

std::string numbered(const std::string& prefix, int i, int width) {
    std::ostringstream s;
    s << prefix << std::setw(width) << std::setfill('0') << i;
    return s.str();
}

std::vector<char> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    require(bool(in), ErrorCode::IoError, "cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Sentences separated by pauses, covering a take.
std::vector<TimedPhoneme> take_script(Rng& rng, double seconds) {
    std::vector<TimedPhoneme> out;
    double t = rng.uniform(0.2, 0.5);
    while (t < seconds - 1.0) {
        const double budget = std::min(rng.uniform(1.5, 3.5), seconds - 0.3 - t);
        const auto s = random_sentence(rng, t, budget);
        out.insert(out.end(), s.begin(), s.end());
        t = out.back().end + rng.uniform(0.2, 0.7);
    }
    return out;
}

struct TakeInfo {
    std::string name;
    Style style;
    Clip clip;
};

}  // namespace

std::string fnv1a_hex(std::span<const char> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

nlohmann::json SynthConfig::to_json() const {
    return {{"version", version},
            {"seed", seed},
            {"image_size", image_size},
            {"crop_size", crop_size},
            {"takes_per_style", takes_per_style},
            {"take_seconds", take_seconds},
            {"val_takes_per_style", val_takes_per_style},
            {"val_take_seconds", val_take_seconds},
            {"probe_sentences", probe_sentences},
            {"probe_repeats", probe_repeats},
            {"probe_seconds", probe_seconds},
            {"render_train", render_train},
            {"render_val", render_val},
            {"expr_train", expr_train},
            {"expr_val", expr_val}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
    SynthConfig c;
    c.version = j.value("version", c.version);
    require(c.version == 1, ErrorCode::VersionMismatch,
            "synthdata config version " + std::to_string(c.version) + " is not supported");
    c.seed = j.value("seed", c.seed);
    c.image_size = j.value("image_size", c.image_size);
    c.crop_size = j.value("crop_size", c.crop_size);
    c.takes_per_style = j.value("takes_per_style", c.takes_per_style);
    c.take_seconds = j.value("take_seconds", c.take_seconds);
    c.val_takes_per_style = j.value("val_takes_per_style", c.val_takes_per_style);
    c.val_take_seconds = j.value("val_take_seconds", c.val_take_seconds);
    c.probe_sentences = j.value("probe_sentences", c.probe_sentences);
    c.probe_repeats = j.value("probe_repeats", c.probe_repeats);
    c.probe_seconds = j.value("probe_seconds", c.probe_seconds);
    c.render_train = j.value("render_train", c.render_train);
    c.render_val = j.value("render_val", c.render_val);
    c.expr_train = j.value("expr_train", c.expr_train);
    c.expr_val = j.value("expr_val", c.expr_val);
    require(c.image_size >= 16 && c.crop_size >= 4 && c.take_seconds >= 2.0 &&
                c.probe_seconds >= 1.0,
            ErrorCode::InvalidArgument, "synthdata config out of range");
    return c;
}

nlohmann::json make_dataset(const SynthConfig& cfg, const fs::path& out) {
    const Lift lift = Lift::make(Rng::derive(cfg.seed, 1));
    const std::uint64_t bg_seed = Rng::derive(cfg.seed, 2);
    const VisemeTable& table = VisemeTable::builtin();
    fs::create_directories(out);

    nlohmann::json labels = {{"takes", nlohmann::json::object()}, {"probe", nlohmann::json::object()}};
    nlohmann::json splits = {{"anim_train", nlohmann::json::array()},
                             {"anim_val", nlohmann::json::array()},
                             {"probe", nlohmann::json::array()}};
    std::vector<fs::path> written;
    auto record = [&](const fs::path& p) { written.push_back(fs::relative(p, out)); };

    lift.save(out / "lift.bin");
    record(out / "lift.bin");

    // Animation takes.
    auto make_takes = [&](const std::string& split, int per_style, double seconds, int base) {
        std::vector<TakeInfo> takes;
        const fs::path dir = out / "anim" / (split == "anim_train" ? "train" : "val");
        fs::create_directories(dir);
        int idx = 0;
        for (int r = 0; r < per_style; ++r)
            for (int s = 0; s < kStyleCount; ++s, ++idx) {
                const int stream = base + idx;
                Rng script_rng(Rng::derive(cfg.seed, 1000 + stream));
                const auto phn = take_script(script_rng, seconds);
                const auto vis = phonemes_to_visemes(phn, seconds, table);
                const PuppetSpec spec{cfg.image_size, cfg.image_size, Style(s),
                                      Rng::derive(cfg.seed, 2000 + stream), seconds};
                TakeInfo info{numbered("take_", idx, 3), Style(s),
                              generate_clip(spec, vis, lift, bg_seed, cfg.crop_size, false)};
                const std::string rel = fs::path("anim") / dir.filename() / info.name;
                save_sequence(out / (rel + ".anim"), info.clip.anim);
                write_phn(out / (rel + ".phn"), phn);
                record(out / (rel + ".anim"));
                record(out / (rel + ".phn"));
                splits[split].push_back(rel);
                labels["takes"][rel] = {{"style", style_name(Style(s))}};
                takes.push_back(std::move(info));
            }
        return takes;
    };
    const auto train_takes = make_takes("anim_train", cfg.takes_per_style, cfg.take_seconds, 0);
    const auto val_takes = make_takes("anim_val", cfg.val_takes_per_style, cfg.val_take_seconds, 500);

    // Probe clips: style x sentence x repeat.
    {
        fs::create_directories(out / "probe");
        std::vector<std::vector<TimedPhoneme>> bank;
        for (int k = 0; k < cfg.probe_sentences; ++k) {
            Rng rng(Rng::derive(cfg.seed, 5000 + k));
            bank.push_back(random_sentence(rng, 0.3, cfg.probe_seconds - 0.6));
        }
        int idx = 0;
        for (int r = 0; r < cfg.probe_repeats; ++r)
            for (int s = 0; s < kStyleCount; ++s)
                for (int k = 0; k < cfg.probe_sentences; ++k, ++idx) {
                    const auto vis = phonemes_to_visemes(bank[k], cfg.probe_seconds, table);
                    const PuppetSpec spec{cfg.image_size, cfg.image_size, Style(s),
                                          Rng::derive(cfg.seed, 6000 + idx), cfg.probe_seconds};
                    const Clip c = generate_clip(spec, vis, lift, bg_seed, cfg.crop_size, false);
                    const std::string rel = "probe/" + numbered("clip_", idx, 4);
                    save_sequence(out / (rel + ".anim"), c.anim);
                    write_phn(out / (rel + ".phn"), bank[k]);
                    record(out / (rel + ".anim"));
                    record(out / (rel + ".phn"));
                    splits["probe"].push_back(rel);
                    labels["probe"][rel] = {{"style", style_name(Style(s))}, {"sentence", k}};
                }
    }

    // Renderer frames sampled from the takes.
    const ImageF background = background_plate(bg_seed, cfg.image_size, cfg.image_size);
    auto make_render = [&](const std::string& split, const std::vector<TakeInfo>& takes, int count,
                           std::uint64_t stream) {
        const fs::path dir = out / "render" / split;
        for (const char* sub : {"frames", "mesh", "mask", "background"}) fs::create_directories(dir / sub);
        write_png(dir / "background" / "cam0.png", background);
        record(dir / "background" / "cam0.png");
        Rng rng(Rng::derive(cfg.seed, stream));
        for (int i = 0; i < count; ++i) {
            const TakeInfo& take = takes[rng.uniform_int(0, int(takes.size()) - 1)];
            const int t = rng.uniform_int(0, take.clip.anim.size() - 1);
            const Appearance look{cfg.image_size, cfg.image_size, take.style};
            const RenderedFrame r = render_puppet(look, take.clip.params[t], background);
            const std::string name = numbered("", i, 4) + ".png";
            write_png(dir / "frames" / name, r.frame_gt);
            write_png(dir / "mesh" / name, r.i_orig);
            write_png(dir / "mask" / name, r.mask);
            for (const char* sub : {"frames", "mesh", "mask"}) record(dir / sub / name);
        }
    };
    make_render("train", train_takes, cfg.render_train, 7000);
    make_render("val", val_takes, cfg.render_val, 7001);

    // Expression crops.
    fs::create_directories(out / "expr");
    auto make_expr = [&](const std::string& split, const std::vector<TakeInfo>& takes, int count,
                         std::uint64_t stream) {
        Rng rng(Rng::derive(cfg.seed, stream));
        std::vector<expr::ExprSample> mouth, eyes;
        for (int i = 0; i < count; ++i) {
            const TakeInfo& take = takes[rng.uniform_int(0, int(takes.size()) - 1)];
            const int t = rng.uniform_int(0, take.clip.anim.size() - 1);
            const Appearance look{cfg.image_size, cfg.image_size, take.style};
            const FrameParams& p = take.clip.params[t];
            mouth.push_back({p.mouth, mouth_crop(look, p.mouth, cfg.crop_size)});
            eyes.push_back({p.eyes, eyes_crop(look, p.eyes, cfg.crop_size)});
        }
        expr::save_expr_samples(out / "expr" / ("mouth_" + split + ".bin"), mouth);
        expr::save_expr_samples(out / "expr" / ("eyes_" + split + ".bin"), eyes);
        record(out / "expr" / ("mouth_" + split + ".bin"));
        record(out / "expr" / ("eyes_" + split + ".bin"));
    };
    make_expr("train", train_takes, cfg.expr_train, 8000);
    make_expr("val", val_takes, cfg.expr_val, 8001);

    std::ofstream(out / "labels.json") << labels.dump(2) << '\n';

    nlohmann::json files = nlohmann::json::object();
    std::sort(written.begin(), written.end());
    for (const auto& rel : written) files[rel.generic_string()] = fnv1a_hex(read_bytes(out / rel));
    const std::string files_dump = files.dump();
    nlohmann::json manifest = {
        {"format", "nh-synth"},
        {"version", 1},
        {"config", cfg.to_json()},
        {"styles", {"neutral", "happy", "angry"}},
        {"lift", "lift.bin"},
        {"camera", "cam0"},
        {"image_size", cfg.image_size},
        {"splits", splits},
        {"labels", "labels.json"},
        {"files", files},
        {"hash", fnv1a_hex(std::span<const char>(files_dump.data(), files_dump.size()))},
    };
    std::ofstream(out / "manifest.json") << manifest.dump(2) << '\n';
    return manifest;
}

std::vector<AnimClip> load_anim_split(const fs::path& root, const std::string& split) {
    std::ifstream in(root / "manifest.json");
    require(bool(in), ErrorCode::NotFound, "no manifest.json in " + root.string());
    const auto manifest = nlohmann::json::parse(in);
    require(manifest.value("format", "") == "nh-synth", ErrorCode::BadFormat, "not a synthdata manifest");
    require(manifest.at("splits").contains(split), ErrorCode::NotFound, "unknown split '" + split + "'");
    const VisemeTable& table = VisemeTable::builtin();
    std::vector<AnimClip> out;
    for (const auto& rel : manifest["splits"][split]) {
        const std::string name = rel;
        AnimClip c{name, load_sequence(root / (name + ".anim")), {}};
        const auto phn = read_phn(root / (name + ".phn"));
        c.visemes = phonemes_to_visemes(phn, c.seq.size() / kFps, table);
        require(c.visemes.size() == c.seq.size(), ErrorCode::DimensionMismatch,
                "viseme/parameter length mismatch in " + name);
        out.push_back(std::move(c));
    }
    require(!out.empty(), ErrorCode::EmptyDataset, "split '" + split + "' is empty");
    return out;
}

std::map<std::string, ClipLabel> read_labels(const fs::path& root) {
    std::ifstream in(root / "labels.json");
    require(bool(in), ErrorCode::NotFound, "no labels.json in " + root.string());
    const auto j = nlohmann::json::parse(in);
    std::map<std::string, ClipLabel> out;
    for (const auto& [k, v] : j.at("takes").items()) out[k] = {style_from_name(v.at("style")), -1};
    for (const auto& [k, v] : j.at("probe").items())
        out[k] = {style_from_name(v.at("style")), v.at("sentence").get<int>()};
    return out;
}

}  // namespace nh::synth
