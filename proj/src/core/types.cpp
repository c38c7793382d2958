#include "nh/core/types.hpp"

#include <cmath>
#include <numbers>

#include "nh/core/error.hpp"

namespace nh {

bool RigidPose::is_valid() const {
    return rotation.allFinite() && translation.allFinite() &&
           rotation.norm() < std::numbers::pi_v<float>;
}

FrameVector pack_frame(const AnimationFrame& frame) {
    FrameVector v;
    v.segment<kExprDim>(kMouthOffset) = frame.mouth;
    v.segment<kExprDim>(kEyesOffset) = frame.eyes;
    v.segment<3>(kPoseOffset) = frame.pose.rotation;
    v.segment<3>(kPoseOffset + 3) = frame.pose.translation;
    return v;
}

AnimationFrame unpack_frame(const Eigen::Ref<const Eigen::VectorXf>& v) {
    require(v.size() == kFrameDim, ErrorCode::DimensionMismatch,
            "frame vector has " + std::to_string(v.size()) + " entries, expected 518");
    AnimationFrame f;
    f.mouth = v.segment<kExprDim>(kMouthOffset);
    f.eyes = v.segment<kExprDim>(kEyesOffset);
    f.pose.rotation = v.segment<3>(kPoseOffset);
    f.pose.translation = v.segment<3>(kPoseOffset + 3);
    return f;
}

Eigen::MatrixXf AnimationSequence::to_matrix() const {
    Eigen::MatrixXf m(size(), kFrameDim);
    for (int t = 0; t < size(); ++t) m.row(t) = pack_frame(frames[t]).transpose();
    return m;
}

AnimationSequence AnimationSequence::from_matrix(const Eigen::MatrixXf& m, double fps) {
    require(m.cols() == kFrameDim, ErrorCode::DimensionMismatch,
            "animation matrix has " + std::to_string(m.cols()) + " columns, expected 518");
    AnimationSequence seq;
    seq.fps = fps;
    seq.frames.reserve(m.rows());
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
        Eigen::VectorXf row = m.row(t).transpose();
        seq.frames.push_back(unpack_frame(row));
    }
    return seq;
}

int frame_count(double seconds) {
    return static_cast<int>(std::lround(kFps * seconds));
}

}  // namespace nh
