#include <doctest.h>

#include <fstream>

#include "nh/core/anim_io.hpp"
#include "nh/core/visemes.hpp"
#include "nh/synth/dataset.hpp"

using namespace nh;
using namespace nh::synth;
namespace fs = std::filesystem;

namespace {

VisemeSequence constant_visemes(int id, int n) { return {std::vector<int>(n, id)}; }

int interior_pixels(const ImageF& i_orig) {
    int n = 0;
    for (int y = 0; y < i_orig.height(); ++y)
        for (int x = 0; x < i_orig.width(); ++x)
            n += i_orig(0, y, x) == 0.33f && i_orig(1, y, x) == 0.08f && i_orig(2, y, x) == 0.10f;
    return n;
}

SynthConfig tiny_config() {
    SynthConfig c;
    c.image_size = 32;
    c.crop_size = 16;
    c.takes_per_style = 1;
    c.take_seconds = 4.0;
    c.val_takes_per_style = 1;
    c.val_take_seconds = 3.0;
    c.probe_sentences = 2;
    c.probe_repeats = 1;
    c.probe_seconds = 2.0;
    c.render_train = 6;
    c.render_val = 3;
    c.expr_train = 5;
    c.expr_val = 3;
    return c;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        out[fs::relative(e.path(), root).generic_string()] =
            std::string(std::istreambuf_iterator<char>(in), {});
    }
    return out;
}

}  // namespace

TEST_CASE("lift is orthonormal and invertible") {
    const Lift l = Lift::make(3);
    CHECK((l.mouth.transpose() * l.mouth - Eigen::Matrix<float, 6, 6>::Identity()).cwiseAbs().maxCoeff() < 1e-5);
    CHECK((l.eyes.transpose() * l.eyes - Eigen::Matrix<float, 6, 6>::Identity()).cwiseAbs().maxCoeff() < 1e-5);
    const BlendshapeWeights b = BlendshapeWeights::Random();
    CHECK((l.project_mouth(l.lift_mouth(b)) - b).cwiseAbs().maxCoeff() < 1e-5);
    const fs::path p = fs::temp_directory_path() / "nh_lift_test.bin";
    l.save(p);
    const Lift r = Lift::load(p);
    CHECK(r.mouth == l.mouth);
    CHECK(r.eyes == l.eyes);
    CHECK(r.gain == l.gain);
}

TEST_CASE("generate_clip is deterministic and well-formed") {
    const Lift lift = Lift::make(1);
    Rng rng(4);
    const auto phn = random_sentence(rng, 0.2, 1.5);
    const auto vis = phonemes_to_visemes(phn, 2.0);
    const PuppetSpec spec{32, 32, Style::Happy, 99, 2.0};
    const Clip a = generate_clip(spec, vis, lift, 5, 16);
    const Clip b = generate_clip(spec, vis, lift, 5, 16);
    CHECK(a.anim.size() == 50);
    CHECK(a.frames_gt.size() == 50);
    CHECK(encode_sequence(a.anim) == encode_sequence(b.anim));
    for (int t = 0; t < 50; ++t) {
        REQUIRE(a.frames_gt[t] == b.frames_gt[t]);
        REQUIRE(a.i_orig[t] == b.i_orig[t]);
        REQUIRE(a.masks[t] == b.masks[t]);
        REQUIRE(((a.masks[t].data() == 0.0f) || (a.masks[t].data() == 1.0f)).all());
        REQUIRE(a.frames_gt[t].data().minCoeff() >= 0.0f);
        REQUIRE(a.frames_gt[t].data().maxCoeff() <= 1.0f);
        REQUIRE(a.mouth[t].tex.height() == 16);
    }
    CHECK_THROWS_AS(generate_clip(spec, constant_visemes(0, 49), lift, 5), Error);
}

TEST_CASE("idle gives the smallest mouth aperture") {
    const Lift lift = Lift::make(1);
    std::vector<int> area;
    for (int v = 0; v < 15; ++v) {
        const PuppetSpec spec{64, 64, Style::Neutral, 1, 1.0};
        const Clip c = generate_clip(spec, constant_visemes(v, 25), lift, 5, 8);
        area.push_back(interior_pixels(c.i_orig.back()));
    }
    for (int v = 1; v < 15; ++v) CHECK(area[0] <= area[v]);
    CHECK(area[10] > area[0]);  // "aa" is wide open
}

TEST_CASE("content and style factorise by construction") {
    const Lift lift = Lift::make(1);
    Rng rng(8);
    const auto vis = phonemes_to_visemes(random_sentence(rng, 0.1, 2.5), 3.0);
    const Clip happy = generate_clip({32, 32, Style::Happy, 10, 3.0}, vis, lift, 5, 8, false);
    const Clip angry = generate_clip({32, 32, Style::Angry, 10, 3.0}, vis, lift, 5, 8, false);
    double pose_diff = 0, eye_diff = 0;
    for (int t = 0; t < happy.anim.size(); ++t) {
        CHECK(happy.params[t].mouth == angry.params[t].mouth);
        pose_diff += (happy.params[t].pose.rotation - angry.params[t].pose.rotation).norm();
        eye_diff += (happy.params[t].eyes - angry.params[t].eyes).norm();
    }
    CHECK(pose_diff > 0.1);
    CHECK(eye_diff > 0.1);
    // Style tracks ignore the content.
    Rng rng2(9);
    const auto other = phonemes_to_visemes(random_sentence(rng2, 0.1, 2.5), 3.0);
    const Clip happy2 = generate_clip({32, 32, Style::Happy, 10, 3.0}, other, lift, 5, 8, false);
    for (int t = 0; t < happy.anim.size(); ++t) {
        CHECK(happy.params[t].pose == happy2.params[t].pose);
        CHECK(happy.params[t].eyes == happy2.params[t].eyes);
    }
}

TEST_CASE("mouth landmarks move rigidly with the head") {
    FrameParams a;
    a.mouth << 0.5f, 0.2f, 0.1f, 0.5f, 0.5f, 0.3f;
    FrameParams b = a;
    b.pose.rotation[2] = 0.2f;
    b.pose.translation << 0.05f, -0.03f, 0.0f;
    CHECK(eval::lmd(mouth_landmarks(a, 64, 64), mouth_landmarks(b, 64, 64)) < 1e-12);
    FrameParams c = a;
    c.mouth[0] = 0.9f;
    CHECK(eval::lmd(mouth_landmarks(a, 64, 64), mouth_landmarks(c, 64, 64)) > 1e-6);
}

TEST_CASE("make_dataset writes a reproducible tree") {
    const fs::path root = fs::temp_directory_path() / "nh_synth_test";
    fs::remove_all(root);
    const SynthConfig cfg = tiny_config();
    const auto m1 = make_dataset(cfg, root / "a");
    const auto m2 = make_dataset(cfg, root / "b");
    CHECK(m1["hash"] == m2["hash"]);
    CHECK(tree_bytes(root / "a") == tree_bytes(root / "b"));
    CHECK(m1["styles"].size() == 3);

    const auto train = load_anim_split(root / "a", "anim_train");
    CHECK(train.size() == 3);
    CHECK(train[0].seq.size() == 100);
    CHECK(train[0].visemes.size() == 100);
    const auto probe = load_anim_split(root / "a", "probe");
    CHECK(probe.size() == 6);
    const auto labels = read_labels(root / "a");
    CHECK(labels.at(probe[0].name).sentence >= 0);
    CHECK(fs::exists(root / "a/render/train/frames/0005.png"));
    CHECK(fs::exists(root / "a/render/val/background/cam0.png"));
    CHECK(expr::load_expr_samples(root / "a/expr/mouth_train.bin").size() == 5);
    // Training inputs carry no style labels.
    std::ifstream man(root / "a/manifest.json");
    const std::string text(std::istreambuf_iterator<char>(man), {});
    CHECK(text.find("\"happy\"") != std::string::npos);  // style names only
    CHECK(text.find("\"sentence\"") == std::string::npos);

    auto other = cfg;
    other.seed = 8;
    CHECK(make_dataset(other, root / "c")["hash"] != m1["hash"]);
    fs::remove_all(root);
}
