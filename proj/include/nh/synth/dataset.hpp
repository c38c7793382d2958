#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nh/synth/puppet.hpp"

namespace nh::synth {

struct SynthConfig {
    int version = 1;
    std::uint64_t seed = 7;
    int image_size = 64;
    int crop_size = 64;
    // Long takes for animation training; one style per take.
    int takes_per_style = 2;
    double take_seconds = 60.0;
    int val_takes_per_style = 1;
    double val_take_seconds = 20.0;
    // Short clips for probing: every style speaks every sentence, several times.
    int probe_sentences = 12;
    int probe_repeats = 4;
    double probe_seconds = 3.0;
    int render_train = 500, render_val = 100;
    int expr_train = 2000, expr_val = 200;

    nlohmann::json to_json() const;
    static SynthConfig from_json(const nlohmann::json& j);
};

// Writes the dataset tree under `out` and returns the manifest:
//   manifest.json, labels.json (hidden style/sentence labels), lift.bin,
//   anim/{train,val}/take_NNN.{anim,phn}, probe/clip_NNN.{anim,phn},
//   render/{train,val}/{frames,mesh,mask}/NNNN.png + background/cam0.png,
//   expr/{mouth,eyes}_{train,val}.bin
nlohmann::json make_dataset(const SynthConfig& config, const std::filesystem::path& out);

struct AnimClip {
    std::string name;  // path relative to the dataset root, no extension
    AnimationSequence seq;
    VisemeSequence visemes;
};

// split: "anim_train", "anim_val" or "probe".
std::vector<AnimClip> load_anim_split(const std::filesystem::path& root, const std::string& split);

// Hidden labels; only evaluation code reads these.
struct ClipLabel {
    Style style = Style::Neutral;
    int sentence = -1;  // probe clips only
};
std::map<std::string, ClipLabel> read_labels(const std::filesystem::path& root);

std::string fnv1a_hex(std::span<const char> bytes);

}  // namespace nh::synth
