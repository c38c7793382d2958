#pragma once

#include <filesystem>
#include <vector>

#include "nh/core/image.hpp"
#include "nh/core/types.hpp"

namespace nh::expr {

// Shape weights plus the texture crop of one region.
struct ExprSample {
    BlendshapeWeights b = BlendshapeWeights::Zero();
    ImageF tex;  // crop x crop x 3, [0,1]
};

// Container "EXPR": header {count, crop, b_dim}, payload per sample b then tex.
void save_expr_samples(const std::filesystem::path& path, const std::vector<ExprSample>& samples);
std::vector<ExprSample> load_expr_samples(const std::filesystem::path& path);

}  // namespace nh::expr
