#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace nh {

inline constexpr int kExprDim = 256;
inline constexpr int kPoseDim = 6;
inline constexpr int kBlendshapeDim = 6;
inline constexpr int kFrameDim = 2 * kExprDim + kPoseDim;  // 518
inline constexpr double kFps = 25.0;

// Frame vector layout: mouth[0:256) eyes[256:512) pose[512:518).
inline constexpr int kMouthOffset = 0;
inline constexpr int kEyesOffset = kExprDim;
inline constexpr int kPoseOffset = 2 * kExprDim;

using BlendshapeWeights = Eigen::Matrix<float, kBlendshapeDim, 1>;
using ExpressionCode = Eigen::Matrix<float, kExprDim, 1>;
using FrameVector = Eigen::Matrix<float, kFrameDim, 1>;

// Axis-angle rotation (radians) and translation (scene units).
struct RigidPose {
    Eigen::Vector3f rotation = Eigen::Vector3f::Zero();
    Eigen::Vector3f translation = Eigen::Vector3f::Zero();

    bool is_valid() const;
    bool operator==(const RigidPose&) const = default;
};

struct AnimationFrame {
    ExpressionCode mouth = ExpressionCode::Zero();
    ExpressionCode eyes = ExpressionCode::Zero();
    RigidPose pose;

    bool operator==(const AnimationFrame&) const = default;
};

struct AnimationSequence {
    std::vector<AnimationFrame> frames;
    double fps = kFps;

    int size() const { return static_cast<int>(frames.size()); }

    // T x 518, one packed frame per row.
    Eigen::MatrixXf to_matrix() const;
    static AnimationSequence from_matrix(const Eigen::MatrixXf& m, double fps = kFps);
};

struct TimedPhoneme {
    std::string label;
    double start = 0.0;
    double end = 0.0;
};

struct VisemeSequence {
    std::vector<int> ids;
    double fps = kFps;

    int size() const { return static_cast<int>(ids.size()); }
};

FrameVector pack_frame(const AnimationFrame& frame);

// Throws DimensionMismatch unless v has exactly 518 entries.
AnimationFrame unpack_frame(const Eigen::Ref<const Eigen::VectorXf>& v);

// Number of 25 fps frames covering a clip of `seconds`.
int frame_count(double seconds);

}  // namespace nh
