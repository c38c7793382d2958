#pragma once

#include <cassert>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

namespace nh {

// Planar (channel-major) image. Each channel is a row-major H x W plane, so a
// single-image NCHW tensor shares this memory layout.
template <typename Scalar>
class Image {
public:
    using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
    using PlaneArray = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Plane = Eigen::Map<PlaneArray>;
    using ConstPlane = Eigen::Map<const PlaneArray>;

    Image() = default;
    Image(int height, int width, int channels, Scalar fill = Scalar(0))
        : h_(height), w_(width), c_(channels),
          data_(Storage::Constant(Eigen::Index(height) * width * channels, fill)) {}

    int height() const { return h_; }
    int width() const { return w_; }
    int channels() const { return c_; }
    Eigen::Index pixels() const { return Eigen::Index(h_) * w_; }
    bool empty() const { return data_.size() == 0; }
    bool same_size(const Image& o) const { return h_ == o.h_ && w_ == o.w_; }
    bool same_shape(const Image& o) const { return same_size(o) && c_ == o.c_; }

    Scalar& operator()(int c, int y, int x) {
        assert(c < c_ && y < h_ && x < w_);
        return data_[(Eigen::Index(c) * h_ + y) * w_ + x];
    }
    Scalar operator()(int c, int y, int x) const {
        assert(c < c_ && y < h_ && x < w_);
        return data_[(Eigen::Index(c) * h_ + y) * w_ + x];
    }

    Plane plane(int c) { return Plane(data_.data() + c * pixels(), h_, w_); }
    ConstPlane plane(int c) const { return ConstPlane(data_.data() + c * pixels(), h_, w_); }

    Storage& data() { return data_; }
    const Storage& data() const { return data_; }

    template <typename Other>
    Image<Other> cast() const {
        Image<Other> out(h_, w_, c_);
        out.data() = data_.template cast<Other>();
        return out;
    }

    bool operator==(const Image& o) const {
        return same_shape(o) && (data_ == o.data_).all();
    }

private:
    int h_ = 0, w_ = 0, c_ = 0;
    Storage data_;
};

using ImageF = Image<float>;
using ImageD = Image<double>;

// 8-bit PNG I/O; grey (1 channel) or RGB (3 channels). Values are clamped to
// [0,1] and rounded on write.
ImageF read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageF& image);
std::vector<unsigned char> encode_png(const ImageF& image);
ImageF decode_png(const std::vector<unsigned char>& bytes);

}  // namespace nh
