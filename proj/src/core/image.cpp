#include "nh/core/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <fstream>
#include <iterator>

#include "nh/core/error.hpp"

namespace nh {
namespace {

std::vector<unsigned char> interleave(const ImageF& img) {
    require(img.channels() == 1 || img.channels() == 3, ErrorCode::InvalidArgument,
            "PNG export supports 1 or 3 channels");
    const int c = img.channels();
    std::vector<unsigned char> px(static_cast<std::size_t>(img.pixels()) * c);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            for (int k = 0; k < c; ++k) {
                const float v = std::clamp(img(k, y, x), 0.0f, 1.0f);
                px[(std::size_t(y) * img.width() + x) * c + k] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        }
    }
    return px;
}

ImageF deinterleave(const std::vector<unsigned char>& px, int h, int w, int c) {
    ImageF img(h, w, c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int k = 0; k < c; ++k) {
                img(k, y, x) = px[(std::size_t(y) * w + x) * c + k] / 255.0f;
            }
        }
    }
    return img;
}

ImageF finish_read(png_image& image, const std::string& origin,
                   const std::function<int(png_image&, void*)>& finish) {
    const bool grey = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
    image.format = grey ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    const int c = grey ? 1 : 3;
    std::vector<unsigned char> px(PNG_IMAGE_SIZE(image));
    if (!finish(image, px.data())) {
        const std::string msg = image.message;
        png_image_free(&image);
        fail(ErrorCode::BadFormat, origin + ": " + msg);
    }
    return deinterleave(px, static_cast<int>(image.height), static_cast<int>(image.width), c);
}

}  // namespace

ImageF read_png(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    return decode_png(bytes);
}

ImageF decode_png(const std::vector<unsigned char>& bytes) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        fail(ErrorCode::BadFormat, std::string("png decode: ") + image.message);
    }
    return finish_read(image, "png decode", [](png_image& im, void* buf) {
        return png_image_finish_read(&im, nullptr, buf, 0, nullptr);
    });
}

std::vector<unsigned char> encode_png(const ImageF& img) {
    auto px = interleave(img);
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = img.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, px.data(), 0, nullptr)) {
        fail(ErrorCode::IoError, std::string("png encode: ") + image.message);
    }
    std::vector<unsigned char> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, px.data(), 0, nullptr)) {
        fail(ErrorCode::IoError, std::string("png encode: ") + image.message);
    }
    out.resize(size);
    return out;
}

void write_png(const std::filesystem::path& path, const ImageF& img) {
    const auto bytes = encode_png(img);
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::IoError, "cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace nh
