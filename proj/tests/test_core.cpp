#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "nh/core/anim_io.hpp"
#include "nh/core/error.hpp"
#include "nh/core/image.hpp"
#include "nh/core/rng.hpp"
#include "nh/core/visemes.hpp"

using namespace nh;
namespace fs = std::filesystem;

namespace {

// Independent midpoint-coverage oracle: scans every phoneme for each frame.
std::vector<int> midpoint_oracle(const std::vector<TimedPhoneme>& ph, double duration) {
    const int n = static_cast<int>(std::lround(25.0 * duration));
    std::vector<int> out(n, 0);
    for (int k = 0; k < n; ++k) {
        const double mid = 0.04 * k + 0.02;
        for (const auto& p : ph) {
            if (p.start <= mid && mid < p.end) out[k] = VisemeTable::builtin().id(p.label);
        }
    }
    return out;
}

AnimationFrame random_frame(Rng& rng) {
    AnimationFrame f;
    for (int i = 0; i < kExprDim; ++i) {
        f.mouth[i] = float(rng.normal());
        f.eyes[i] = float(rng.normal());
    }
    for (int i = 0; i < 3; ++i) {
        f.pose.rotation[i] = float(rng.uniform(-0.5, 0.5));
        f.pose.translation[i] = float(rng.normal());
    }
    return f;
}

fs::path temp_path(const std::string& name) {
    auto dir = fs::temp_directory_path() / "nh_test_core";
    fs::create_directories(dir);
    return dir / name;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an nh::Error");
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("viseme table matches the shipped data file") {
    const auto& builtin = VisemeTable::builtin();
    const auto file = VisemeTable::load(fs::path(NH_DATA_DIR) / "visemes_v1.tsv");
    CHECK(builtin.viseme_count() == 15);
    CHECK(file.viseme_count() == builtin.viseme_count());
    CHECK(file.phonemes() == builtin.phonemes());
    for (const auto& ph : builtin.phonemes()) CHECK(file.id(ph) == builtin.id(ph));
}

TEST_CASE("idle is reserved for silence") {
    const auto& t = VisemeTable::builtin();
    for (const auto& ph : t.phonemes()) {
        const int id = t.id(ph);
        CHECK(id > 0);
        CHECK(id < t.viseme_count());
    }
    CHECK(t.id("sil") == kIdleViseme);
    CHECK(t.id("sp") == kIdleViseme);
    CHECK(t.id("AA1") == t.id("AA"));
    CHECK_THROWS_AS(VisemeTable::parse("version 1\nviseme 0 idle\nviseme 1 x\nphone A 0\n"), Error);
}

TEST_CASE("phonemes_to_visemes examples") {
    const auto& t = VisemeTable::builtin();

    SUBCASE("silence fills with idle") {
        auto v = phonemes_to_visemes({}, 1.0);
        CHECK(v.size() == 25);
        for (int id : v.ids) CHECK(id == 0);
    }
    SUBCASE("single phoneme covers all five midpoints") {
        std::vector<TimedPhoneme> ph{{"AA", 0.0, 0.2}};
        auto v = phonemes_to_visemes(ph, 0.2);
        CHECK(v.ids == std::vector<int>(5, t.id("AA")));
        CHECK(v.ids == midpoint_oracle(ph, 0.2));
    }
    SUBCASE("boundary at 0.12 s: frame 3 midpoint 0.14 s falls in M") {
        std::vector<TimedPhoneme> ph{{"AA", 0.0, 0.12}, {"M", 0.12, 0.2}};
        auto v = phonemes_to_visemes(ph, 0.2);
        const int aa = t.id("AA"), m = t.id("M");
        CHECK(v.ids == std::vector<int>{aa, aa, aa, m, m});
        CHECK(v.ids == midpoint_oracle(ph, 0.2));
    }
}

TEST_CASE("phonemes_to_visemes errors") {
    std::vector<TimedPhoneme> unknown{{"XQ", 0.0, 0.1}};
    try {
        phonemes_to_visemes(unknown, 1.0);
        FAIL("expected rejection");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownPhoneme);
        CHECK(std::string(e.what()).find("XQ") != std::string::npos);
    }
    std::vector<TimedPhoneme> overlap{{"AA", 0.0, 0.2}, {"M", 0.1, 0.3}};
    CHECK(code_of([&] { phonemes_to_visemes(overlap, 1.0); }) == ErrorCode::OverlappingPhonemes);
    std::vector<TimedPhoneme> late{{"AA", 0.0, 2.0}};
    CHECK(code_of([&] { phonemes_to_visemes(late, 1.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("phonemes_to_visemes property: length depends on duration only, agrees with oracle") {
    Rng rng(7);
    const auto inventory = VisemeTable::builtin().phonemes();
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<TimedPhoneme> ph;
        double t = rng.uniform(0.0, 0.3);
        const double duration = rng.uniform(0.5, 4.0);
        while (true) {
            const double len = rng.uniform(0.03, 0.25);
            if (t + len > duration) break;
            ph.push_back({inventory[rng.uniform_int(0, int(inventory.size()) - 1)], t, t + len});
            t += len + (rng.uniform() < 0.2 ? rng.uniform(0.0, 0.2) : 0.0);
        }
        auto v = phonemes_to_visemes(ph, duration);
        CHECK(v.size() == frame_count(duration));
        CHECK(v.ids == midpoint_oracle(ph, duration));
        for (int id : v.ids) CHECK(id < 15);
    }
}

TEST_CASE(".phn parse round-trip") {
    auto ph = parse_phn("# comment\nsil 0 0.1\nHH 0.1 0.2\n\nAY1 0.2 0.45\n");
    REQUIRE(ph.size() == 3);
    CHECK(ph[2].label == "AY1");
    CHECK(ph[2].end == doctest::Approx(0.45));
    auto p = temp_path("rt.phn");
    write_phn(p, ph);
    auto back = read_phn(p);
    REQUIRE(back.size() == 3);
    CHECK(back[1].label == "HH");
    CHECK(code_of([] { parse_phn("AA 0.1\n"); }) == ErrorCode::BadFormat);
}

TEST_CASE("pack/unpack layout") {
    AnimationFrame zero;
    CHECK(pack_frame(zero).isZero());
    CHECK(pack_frame(zero).size() == 518);

    Eigen::VectorXf v = Eigen::VectorXf::Zero(518);
    v.segment<6>(512) << 0.1f, 0, 0, 0, 0, 2;
    auto f = unpack_frame(v);
    CHECK(f.pose.rotation == Eigen::Vector3f(0.1f, 0, 0));
    CHECK(f.pose.translation == Eigen::Vector3f(0, 0, 2));

    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        auto r = random_frame(rng);
        Eigen::VectorXf packed = pack_frame(r);
        CHECK(unpack_frame(packed) == r);
        CHECK(packed.segment(256, 256) == r.eyes);
    }
    Eigen::VectorXf bad(517);
    CHECK(code_of([&] { unpack_frame(bad); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("rigid pose invariants") {
    RigidPose p;
    CHECK(p.is_valid());
    p.rotation = Eigen::Vector3f(3.2f, 0, 0);
    CHECK_FALSE(p.is_valid());
    p.rotation = Eigen::Vector3f(0, std::nanf(""), 0);
    CHECK_FALSE(p.is_valid());
}

TEST_CASE(".anim save/load") {
    Rng rng(11);
    AnimationSequence seq;
    for (int i = 0; i < 100; ++i) seq.frames.push_back(random_frame(rng));
    auto p = temp_path("clip.anim");
    save_sequence(p, seq);
    auto back = load_sequence(p);
    REQUIRE(back.size() == 100);
    CHECK(back.fps == 25.0);
    CHECK((back.to_matrix().array() == seq.to_matrix().array()).all());

    SUBCASE("dim 517 -> dimension error") {
        auto bytes = encode_sequence(seq);
        std::string s(bytes.begin(), bytes.end());
        const auto pos = s.find("\"dim\":518");
        REQUIRE(pos != std::string::npos);
        s.replace(pos, 9, "\"dim\":517");
        std::vector<char> mod(s.begin(), s.end());
        CHECK(code_of([&] { decode_sequence(mod); }) == ErrorCode::DimensionMismatch);
    }
    SUBCASE("version mismatch") {
        auto bytes = encode_sequence(seq);
        std::string s(bytes.begin(), bytes.end());
        const auto pos = s.find("\"version\":1");
        REQUIRE(pos != std::string::npos);
        s.replace(pos, 11, "\"version\":9");
        std::vector<char> mod(s.begin(), s.end());
        CHECK(code_of([&] { decode_sequence(mod); }) == ErrorCode::VersionMismatch);
    }
    SUBCASE("empty file -> truncation") {
        auto e = temp_path("empty.anim");
        std::ofstream(e).close();
        CHECK(code_of([&] { load_sequence(e); }) == ErrorCode::TruncatedFile);
    }
    SUBCASE("cut payload -> truncation") {
        auto bytes = encode_sequence(seq);
        bytes.resize(bytes.size() - 10);
        CHECK(code_of([&] { decode_sequence(bytes); }) == ErrorCode::TruncatedFile);
    }
}

TEST_CASE("png round-trip at 8-bit precision") {
    ImageF img(5, 7, 3);
    Rng rng(1);
    for (Eigen::Index i = 0; i < img.data().size(); ++i) img.data()[i] = float(rng.uniform());
    auto p = temp_path("img.png");
    write_png(p, img);
    auto back = read_png(p);
    REQUIRE(back.same_shape(img));
    CHECK((back.data() - img.data()).abs().maxCoeff() <= 0.5f / 255.0f + 1e-6f);

    ImageF grey(4, 4, 1, 1.0f);
    auto g = decode_png(encode_png(grey));
    CHECK(g.channels() == 1);
    CHECK(g == grey);
}
