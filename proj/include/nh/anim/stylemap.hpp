#pragma once

#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "nh/anim/model.hpp"
#include "nh/nn/layers.hpp"

namespace nh::anim {

struct StyleMapConfig {
    int hidden = 1024;  // two hidden layers each way
    int latent = 2;
    int batch = 64;
    int epochs = 200;
    float lr = 1e-3f;
    double kl_weight = 1e-2;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static StyleMapConfig from_json(const nlohmann::json& j);
};

// Small fully connected VAE between style vectors and a 2-D map. Inputs are
// standardised per dimension with statistics of the fitting set.
class StyleMap {
public:
    StyleMap(int style_dim, const StyleMapConfig& config, Rng& rng);

    // Posterior mean; deterministic.
    Eigen::Vector2f project(const Eigen::VectorXf& z) const;
    Eigen::VectorXf lift(const Eigen::Vector2f& p) const;

    int style_dim() const { return style_dim_; }
    const StyleMapConfig& config() const { return config_; }

    // Graph pieces used while fitting; x is standardised {N, D, 1, 1}.
    std::pair<ag::Var, ag::Var> encode(const ag::Var& x) const;
    ag::Var decode(const ag::Var& p) const;

    Eigen::VectorXf mean, scale;
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

private:
    int style_dim_;
    StyleMapConfig config_;
    nn::ParamSet params_;
    nn::Linear e1_, e2_, mu_, lv_, d1_, d2_, out_;
};

struct StyleMapFit {
    std::unique_ptr<StyleMap> map;
    double final_loss = 0;
};

// Style means of `count` random crops (lengths in [min_frames, max_frames],
// clipped to the take) drawn from the takes; the fitting set of the map.
std::vector<Eigen::VectorXf> collect_styles(const AnimModel& model, const std::vector<Take>& takes,
                                            int count, int min_frames, int max_frames,
                                            std::uint64_t seed);

StyleMapFit style_map_fit(const std::vector<Eigen::VectorXf>& styles, const StyleMapConfig& config);

// Linear 2-D baseline (PCA through the mean) for the reconstruction check.
struct Pca2 {
    Eigen::VectorXf mean;
    Eigen::MatrixXf basis;  // D x 2
    static Pca2 fit(const std::vector<Eigen::VectorXf>& styles);
    Eigen::VectorXf reconstruct(const Eigen::VectorXf& z) const;
};

struct GridPoint {
    Eigen::Vector2f point;
    Eigen::VectorXf style;
};

// n x n lattice over [-2, 2]^2 (row-major, y outer); n = 1 is the origin.
std::vector<GridPoint> style_grid(const StyleMap& map, int n);
nlohmann::json style_grid_json(const std::vector<GridPoint>& grid, int n);

void save_style_map(const StyleMap& map, const std::filesystem::path& path);
std::unique_ptr<StyleMap> load_style_map(const std::filesystem::path& path);

}  // namespace nh::anim
