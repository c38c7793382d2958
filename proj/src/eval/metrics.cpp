#include "nh/eval/metrics.hpp"

#include <algorithm>

namespace nh::eval {
namespace {

using PlaneD = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::ArrayXd gaussian_kernel(int radius, double sigma) {
    Eigen::ArrayXd k(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    return k / k.sum();
}

// Separable filtering with border renormalisation.
PlaneD filter(const PlaneD& in, const Eigen::ArrayXd& k) {
    const int r = static_cast<int>(k.size() / 2);
    const int h = static_cast<int>(in.rows()), w = static_cast<int>(in.cols());
    PlaneD tmp(h, w), out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0, norm = 0.0;
            for (int j = -r; j <= r; ++j) {
                const int xx = x + j;
                if (xx < 0 || xx >= w) continue;
                acc += k[j + r] * in(y, xx);
                norm += k[j + r];
            }
            tmp(y, x) = acc / norm;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0, norm = 0.0;
            for (int j = -r; j <= r; ++j) {
                const int yy = y + j;
                if (yy < 0 || yy >= h) continue;
                acc += k[j + r] * tmp(yy, x);
                norm += k[j + r];
            }
            out(y, x) = acc / norm;
        }
    }
    return out;
}

nlohmann::json psnr_json(double v) {
    return std::isinf(v) ? nlohmann::json("inf") : nlohmann::json(v);
}

}  // namespace

double ssim(const ImageD& a, const ImageD& b) {
    require(a.same_shape(b), ErrorCode::ShapeMismatch, "ssim: image shapes differ");
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const Eigen::ArrayXd k = gaussian_kernel(5, 1.5);
    double total = 0.0;
    for (int c = 0; c < a.channels(); ++c) {
        const PlaneD x = a.plane(c), y = b.plane(c);
        const PlaneD mx = filter(x, k), my = filter(y, k);
        const PlaneD sxx = filter(x * x, k) - mx * mx;
        const PlaneD syy = filter(y * y, k) - my * my;
        const PlaneD sxy = filter(x * y, k) - mx * my;
        const PlaneD num = (2.0 * mx * my + c1) * (2.0 * sxy + c2);
        const PlaneD den = (mx * mx + my * my + c1) * (sxx + syy + c2);
        total += (num / den).mean();
    }
    return total / a.channels();
}

nlohmann::json compare_image_dirs(const std::filesystem::path& pred_dir,
                                  const std::filesystem::path& gt_dir) {
    namespace fs = std::filesystem;
    require(fs::is_directory(gt_dir), ErrorCode::IoError, gt_dir.string() + " is not a directory");
    require(fs::is_directory(pred_dir), ErrorCode::IoError,
            pred_dir.string() + " is not a directory");
    std::vector<fs::path> names;
    for (const auto& e : fs::directory_iterator(gt_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") names.push_back(e.path().filename());
    }
    std::sort(names.begin(), names.end());
    require(!names.empty(), ErrorCode::EmptyDataset, "no PNG frames in " + gt_dir.string());

    nlohmann::json frames = nlohmann::json::array();
    double sl1 = 0.0, smse = 0.0, sssim = 0.0, spsnr = 0.0;
    bool any_inf = false;
    for (const auto& n : names) {
        require(fs::exists(pred_dir / n), ErrorCode::NotFound,
                "prediction missing for frame " + n.string());
        const ImageF gt = read_png(gt_dir / n);
        const ImageF pr = read_png(pred_dir / n);
        const double e1 = l1(pr, gt), p = psnr(pr, gt), s = ssim(pr, gt);
        frames.push_back({{"name", n.string()}, {"l1", e1}, {"psnr", psnr_json(p)}, {"ssim", s}});
        sl1 += e1;
        smse += mse(pr, gt);
        sssim += s;
        if (std::isinf(p)) any_inf = true; else spsnr += p;
    }
    const double count = static_cast<double>(names.size());
    const double mean_mse = smse / count;
    return {{"frames", frames},
            {"aggregate",
             {{"count", names.size()},
              {"l1", sl1 / count},
              {"ssim", sssim / count},
              {"psnr_of_mean_mse", psnr_json(mean_mse == 0.0 ? kPsnrInfinite
                                                             : 10.0 * std::log10(1.0 / mean_mse))},
              {"mean_psnr", any_inf ? nlohmann::json("inf") : nlohmann::json(spsnr / count)},
              {"lpips", nullptr}}}};
}

}  // namespace nh::eval
