#include "nh/core/anim_io.hpp"

#include "nh/core/container.hpp"
#include "nh/core/error.hpp"

namespace nh {
namespace {

constexpr Magic kAnimMagic{'A', 'N', 'I', 'M'};

nlohmann::json anim_header(const AnimationSequence& seq) {
    return {{"format", "nh-anim"},
            {"version", kAnimFormatVersion},
            {"fps", seq.fps},
            {"dim", kFrameDim},
            {"frames", seq.size()},
            {"layout", {{"mouth", {kMouthOffset, kEyesOffset}},
                        {"eyes", {kEyesOffset, kPoseOffset}},
                        {"pose", {kPoseOffset, kFrameDim}}}}};
}

std::vector<float> flatten(const AnimationSequence& seq) {
    std::vector<float> payload;
    payload.reserve(static_cast<std::size_t>(seq.size()) * kFrameDim);
    for (const auto& f : seq.frames) {
        const FrameVector v = pack_frame(f);
        payload.insert(payload.end(), v.data(), v.data() + kFrameDim);
    }
    return payload;
}

AnimationSequence from_container(const Container& c) {
    const auto& h = c.header;
    if (h.value("format", "") != "nh-anim") fail(ErrorCode::BadFormat, "not an nh-anim file");
    const int version = h.value("version", -1);
    if (version != kAnimFormatVersion) {
        fail(ErrorCode::VersionMismatch, "anim version " + std::to_string(version) +
                                             ", reader supports " +
                                             std::to_string(kAnimFormatVersion));
    }
    const int dim = h.value("dim", -1);
    if (dim != kFrameDim) {
        fail(ErrorCode::DimensionMismatch,
             "anim frame dimension " + std::to_string(dim) + ", expected 518");
    }
    const int frames = h.value("frames", -1);
    if (frames < 0 || c.payload.size() != static_cast<std::size_t>(frames) * kFrameDim) {
        fail(ErrorCode::TruncatedFile, "anim payload does not hold the declared frame count");
    }
    AnimationSequence seq;
    seq.fps = h.value("fps", kFps);
    seq.frames.reserve(frames);
    for (int t = 0; t < frames; ++t) {
        Eigen::Map<const Eigen::VectorXf> v(c.payload.data() + std::size_t(t) * kFrameDim,
                                            kFrameDim);
        seq.frames.push_back(unpack_frame(v));
    }
    return seq;
}

}  // namespace

void save_sequence(const std::filesystem::path& path, const AnimationSequence& seq) {
    require(!seq.frames.empty(), ErrorCode::InvalidArgument, "cannot save an empty sequence");
    write_container(path, kAnimMagic, anim_header(seq), flatten(seq));
}

AnimationSequence load_sequence(const std::filesystem::path& path) {
    return from_container(read_container(path, kAnimMagic));
}

std::vector<char> encode_sequence(const AnimationSequence& seq) {
    return encode_container(kAnimMagic, anim_header(seq), flatten(seq));
}

AnimationSequence decode_sequence(std::span<const char> bytes) {
    return from_container(decode_container(bytes, kAnimMagic));
}

}  // namespace nh
