#include "nh/anim/stylemap.hpp"

#include <algorithm>

#include <Eigen/SVD>

#include "nh/core/error.hpp"

namespace nh::anim {
namespace {

using ag::Shape;
using ag::Var;

Var column(const Eigen::VectorXf& v) {
    return Var::constant(Shape{1, int(v.size()), 1, 1}, Eigen::ArrayXf(v.array()));
}

}  // namespace

nlohmann::json StyleMapConfig::to_json() const {
    return {{"hidden", hidden}, {"latent", latent}, {"batch", batch}, {"epochs", epochs},
            {"lr", lr},         {"kl_weight", kl_weight}, {"seed", seed}};
}

StyleMapConfig StyleMapConfig::from_json(const nlohmann::json& j) {
    StyleMapConfig c;
    c.hidden = j.value("hidden", c.hidden);
    c.latent = j.value("latent", c.latent);
    c.batch = j.value("batch", c.batch);
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.kl_weight = j.value("kl_weight", c.kl_weight);
    c.seed = j.value("seed", c.seed);
    require(c.latent == 2, ErrorCode::InvalidArgument, "the style map is two-dimensional");
    require(c.hidden > 0 && c.batch > 0 && c.epochs > 0 && c.lr > 0, ErrorCode::InvalidArgument,
            "style map config out of range");
    return c;
}

StyleMap::StyleMap(int style_dim, const StyleMapConfig& config, Rng& rng)
    : mean(Eigen::VectorXf::Zero(style_dim)),
      scale(Eigen::VectorXf::Ones(style_dim)),
      style_dim_(style_dim),
      config_(config) {
    const int h = config.hidden;
    e1_ = nn::Linear(params_, "e1", style_dim, h, rng);
    e2_ = nn::Linear(params_, "e2", h, h, rng);
    mu_ = nn::Linear(params_, "mu", h, 2, rng, 0.5);
    lv_ = nn::Linear(params_, "log_var", h, 2, rng, 0.1);
    d1_ = nn::Linear(params_, "d1", 2, h, rng);
    d2_ = nn::Linear(params_, "d2", h, h, rng);
    out_ = nn::Linear(params_, "out", h, style_dim, rng, 0.5);
}

std::pair<Var, Var> StyleMap::encode(const Var& x) const {
    const Var h = ag::leaky_relu(e2_(ag::leaky_relu(e1_(x))));
    return {mu_(h), ag::clamp(lv_(h), -10.0f, 10.0f)};
}

Var StyleMap::decode(const Var& p) const {
    return out_(ag::leaky_relu(d2_(ag::leaky_relu(d1_(p)))));
}

Eigen::Vector2f StyleMap::project(const Eigen::VectorXf& z) const {
    require(z.size() == style_dim_, ErrorCode::DimensionMismatch,
            "style vector must have " + std::to_string(style_dim_) + " entries, got " +
                std::to_string(z.size()));
    ag::NoGradGuard guard;
    const Eigen::VectorXf x = (z - mean).cwiseQuotient(scale);
    return encode(column(x)).first.value().matrix();
}

Eigen::VectorXf StyleMap::lift(const Eigen::Vector2f& p) const {
    require(p.allFinite(), ErrorCode::InvalidArgument, "style map point must be finite");
    ag::NoGradGuard guard;
    const Eigen::VectorXf x = decode(column(p)).value().matrix();
    return x.cwiseProduct(scale) + mean;
}

std::vector<Eigen::VectorXf> collect_styles(const AnimModel& model, const std::vector<Take>& takes,
                                            int count, int min_frames, int max_frames,
                                            std::uint64_t seed) {
    require(!takes.empty() && count > 0 && min_frames >= 9 && max_frames >= min_frames,
            ErrorCode::InvalidArgument, "collect_styles: bad arguments");
    require(std::any_of(takes.begin(), takes.end(), [&](const Take& t) { return t.seq.size() >= min_frames; }),
            ErrorCode::InvalidArgument, "collect_styles: every take is shorter than the minimum crop");
    Rng rng(seed);
    std::vector<Eigen::VectorXf> out;
    out.reserve(count);
    while (int(out.size()) < count) {
        const Take& t = takes[rng.uniform_int(0, int(takes.size()) - 1)];
        const int n = t.seq.size();
        if (n < min_frames) continue;
        const int len = rng.uniform_int(min_frames, std::min(max_frames, n));
        const int start = rng.uniform_int(0, n - len);
        out.push_back(style_encode(model, t.seq.to_matrix().middleRows(start, len)).mu);
    }
    return out;
}

StyleMapFit style_map_fit(const std::vector<Eigen::VectorXf>& styles, const StyleMapConfig& config) {
    require(styles.size() >= 2, ErrorCode::EmptyDataset, "style_map_fit needs at least two styles");
    const int d = int(styles.front().size());
    Rng init_rng(Rng::derive(config.seed, 1));
    Rng order_rng(Rng::derive(config.seed, 2));
    Rng noise_rng(Rng::derive(config.seed, 3));
    auto map = std::make_unique<StyleMap>(d, config, init_rng);

    Eigen::MatrixXf data(d, styles.size());
    for (std::size_t i = 0; i < styles.size(); ++i) {
        require(styles[i].size() == d, ErrorCode::DimensionMismatch, "style vectors differ in size");
        data.col(i) = styles[i];
    }
    map->mean = data.rowwise().mean();
    const Eigen::VectorXf var = (data.colwise() - map->mean).rowwise().squaredNorm() / float(data.cols());
    map->scale = var.unaryExpr([](float v) { return v > 1e-12f ? std::sqrt(v) : 1.0f; });
    const Eigen::MatrixXf x = (data.colwise() - map->mean).array().colwise() / map->scale.array();

    nn::Adam opt(map->params().vars(), config.lr);
    std::vector<int> order(styles.size());
    StyleMapFit fit;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[order_rng.uniform_int(0, int(i) - 1)]);
        for (std::size_t lo = 0; lo < order.size(); lo += config.batch) {
            const int n = int(std::min<std::size_t>(config.batch, order.size() - lo));
            Eigen::MatrixXf b(d, n);
            for (int k = 0; k < n; ++k) b.col(k) = x.col(order[lo + k]);
            const Var xb = Var::constant(Shape{n, d, 1, 1}, Eigen::Map<const Eigen::ArrayXf>(b.data(), b.size()));
            const auto [mu, lv] = map->encode(xb);
            Eigen::ArrayXf eps(mu.size());
            for (auto& e : eps) e = float(noise_rng.normal());
            const Var rec = ag::mse_mean(map->decode(ag::reparameterize(mu, lv, eps)), xb);
            const Var kl = ag::kl_standard_normal(mu, lv);
            const Var loss = ag::add(rec, ag::scale(kl, float(config.kl_weight)));
            nn::check_finite("style map", loss.item());
            opt.zero_grad();
            ag::backward(loss);
            opt.step();
            fit.final_loss = loss.item();
        }
    }
    fit.map = std::move(map);
    return fit;
}

Pca2 Pca2::fit(const std::vector<Eigen::VectorXf>& styles) {
    require(styles.size() >= 3, ErrorCode::EmptyDataset, "PCA baseline needs at least three styles");
    Eigen::MatrixXf data(styles.front().size(), styles.size());
    for (std::size_t i = 0; i < styles.size(); ++i) data.col(i) = styles[i];
    Pca2 p;
    p.mean = data.rowwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXf> svd(data.colwise() - p.mean, Eigen::ComputeThinU);
    p.basis = svd.matrixU().leftCols(2);
    return p;
}

Eigen::VectorXf Pca2::reconstruct(const Eigen::VectorXf& z) const {
    return mean + basis * (basis.transpose() * (z - mean));
}

std::vector<GridPoint> style_grid(const StyleMap& map, int n) {
    require(n >= 1 && n <= 64, ErrorCode::InvalidArgument, "grid size must be in [1, 64]");
    std::vector<GridPoint> out;
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            const float step = n == 1 ? 0.0f : 4.0f / float(n - 1);
            const Eigen::Vector2f p(n == 1 ? 0.0f : -2.0f + step * ix, n == 1 ? 0.0f : -2.0f + step * iy);
            out.push_back({p, map.lift(p)});
        }
    return out;
}

nlohmann::json style_grid_json(const std::vector<GridPoint>& grid, int n) {
    nlohmann::json points = nlohmann::json::array(), vectors = nlohmann::json::array();
    for (const auto& g : grid) {
        points.push_back({g.point.x(), g.point.y()});
        vectors.push_back(std::vector<float>(g.style.data(), g.style.data() + g.style.size()));
    }
    return {{"n", n}, {"points", points}, {"vectors", vectors}};
}

void save_style_map(const StyleMap& map, const std::filesystem::path& path) {
    nn::ParamSet stats;
    stats.add("mean", Shape{int(map.mean.size()), 1, 1, 1}, map.mean.array());
    stats.add("scale", Shape{int(map.scale.size()), 1, 1, 1}, map.scale.array());
    nn::save_checkpoint(path, "stylemap",
                        {{"style_dim", map.style_dim()}, {"map", map.config().to_json()}},
                        {&stats, &map.params()});
}

std::unique_ptr<StyleMap> load_style_map(const std::filesystem::path& path) {
    const auto header = nn::read_checkpoint_header(path);
    const int d = header.at("config").at("style_dim");
    const auto cfg = StyleMapConfig::from_json(header.at("config").at("map"));
    Rng rng(0);
    auto map = std::make_unique<StyleMap>(d, cfg, rng);
    nn::ParamSet stats;
    stats.add("mean", Shape{d, 1, 1, 1}, Eigen::ArrayXf::Zero(d));
    stats.add("scale", Shape{d, 1, 1, 1}, Eigen::ArrayXf::Ones(d));
    nn::load_checkpoint(path, "stylemap", {&stats, &map->params()});
    map->mean = stats.all()[0].var.value().matrix();
    map->scale = stats.all()[1].var.value().matrix();
    return map;
}

}  // namespace nh::anim
