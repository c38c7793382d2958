#include "nh/expr/sample.hpp"

#include "nh/core/container.hpp"
#include "nh/core/error.hpp"

namespace nh::expr {

namespace {
constexpr Magic kMagic{'E', 'X', 'P', 'R'};
}

void save_expr_samples(const std::filesystem::path& path, const std::vector<ExprSample>& samples) {
    require(!samples.empty(), ErrorCode::EmptyDataset, "no expression samples to save");
    const int crop = samples.front().tex.height();
    std::vector<float> payload;
    payload.reserve(samples.size() * (kBlendshapeDim + 3 * crop * crop));
    for (const auto& s : samples) {
        require(s.tex.height() == crop && s.tex.width() == crop && s.tex.channels() == 3,
                ErrorCode::ShapeMismatch, "expression crops differ in size");
        payload.insert(payload.end(), s.b.data(), s.b.data() + kBlendshapeDim);
        payload.insert(payload.end(), s.tex.data().data(), s.tex.data().data() + s.tex.data().size());
    }
    write_container(path, kMagic,
                    {{"format", "nh-expr"},
                     {"version", 1},
                     {"count", samples.size()},
                     {"crop", crop},
                     {"b_dim", kBlendshapeDim}},
                    payload);
}

std::vector<ExprSample> load_expr_samples(const std::filesystem::path& path) {
    const Container c = read_container(path, kMagic);
    require(c.header.value("version", 0) == 1, ErrorCode::VersionMismatch,
            "unsupported expression sample version in " + path.string());
    const std::size_t count = c.header.at("count");
    const int crop = c.header.at("crop");
    require(c.header.at("b_dim") == kBlendshapeDim, ErrorCode::DimensionMismatch,
            "expression samples: b_dim mismatch");
    const std::size_t per = kBlendshapeDim + 3 * std::size_t(crop) * crop;
    require(c.payload.size() == count * per, ErrorCode::TruncatedFile,
            "expression samples: payload size mismatch in " + path.string());
    std::vector<ExprSample> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        const float* p = c.payload.data() + i * per;
        out[i].b = Eigen::Map<const BlendshapeWeights>(p);
        out[i].tex = ImageF(crop, crop, 3);
        out[i].tex.data() = Eigen::Map<const Eigen::ArrayXf>(p + kBlendshapeDim, 3 * crop * crop);
    }
    return out;
}

}  // namespace nh::expr
