#include "nh/nn/layers.hpp"

#include <cmath>
#include <cstdio>

#include "nh/core/container.hpp"
#include "nh/core/error.hpp"

namespace nh::nn {
namespace {
constexpr Magic kCheckpointMagic{'C', 'K', 'P', 'T'};
constexpr int kCheckpointVersion = 1;
}  // namespace

ag::Var ParamSet::add(const std::string& name, ag::Shape shape, Eigen::ArrayXf init) {
    auto v = ag::Var::parameter(shape, std::move(init));
    params_.push_back({name, v});
    return v;
}

std::vector<ag::Var> ParamSet::vars() const {
    std::vector<ag::Var> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.var);
    return out;
}

Eigen::Index ParamSet::count() const {
    Eigen::Index n = 0;
    for (const auto& p : params_) n += p.var.size();
    return n;
}

void ParamSet::zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
}

std::vector<float> ParamSet::flatten() const {
    std::vector<float> out;
    out.reserve(count());
    for (const auto& p : params_) {
        out.insert(out.end(), p.var.value().data(), p.var.value().data() + p.var.size());
    }
    return out;
}

void ParamSet::assign(std::span<const float> flat) {
    require(static_cast<Eigen::Index>(flat.size()) == count(), ErrorCode::ShapeMismatch,
            "parameter payload size mismatch");
    std::size_t off = 0;
    for (auto& p : params_) {
        auto& v = p.var.mutable_value();
        std::copy(flat.begin() + off, flat.begin() + off + v.size(), v.data());
        off += v.size();
    }
}

Eigen::ArrayXf he_uniform(Eigen::Index count, int fan_in, Rng& rng, double gain) {
    const double bound = gain * std::sqrt(6.0 / std::max(fan_in, 1));
    Eigen::ArrayXf a(count);
    for (Eigen::Index i = 0; i < count; ++i) a[i] = static_cast<float>(rng.uniform(-bound, bound));
    return a;
}

Conv2d::Conv2d(ParamSet& ps, const std::string& name, int in, int out, int kh, int kw,
               ag::ConvSpec spec, Rng& rng, double gain)
    : spec_(spec) {
    const ag::Shape ws{out, in, kh, kw};
    w_ = ps.add(name + ".w", ws, he_uniform(ws.size(), in * kh * kw, rng, gain));
    b_ = ps.add(name + ".b", ag::Shape{out, 1, 1, 1}, Eigen::ArrayXf::Zero(out));
}

Linear::Linear(ParamSet& ps, const std::string& name, int in, int out, Rng& rng, double gain) {
    const ag::Shape ws{out, in, 1, 1};
    w_ = ps.add(name + ".w", ws, he_uniform(ws.size(), in, rng, gain));
    b_ = ps.add(name + ".b", ag::Shape{out, 1, 1, 1}, Eigen::ArrayXf::Zero(out));
}

Adam::Adam(std::vector<ag::Var> params, float lr, float beta1, float beta2, float eps)
    : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.push_back(Eigen::ArrayXf::Zero(p.size()));
        v_.push_back(Eigen::ArrayXf::Zero(p.size()));
    }
}

void Adam::step() {
    ++t_;
    const float c1 = 1.0f - std::pow(b1_, float(t_));
    const float c2 = 1.0f - std::pow(b2_, float(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p.has_grad()) continue;
        const auto& g = p.grad();
        m_[i] = b1_ * m_[i] + (1.0f - b1_) * g;
        v_[i] = b2_ * v_[i] + (1.0f - b2_) * g.square();
        p.mutable_value() -= lr_ * (m_[i] / c1) / ((v_[i] / c2).sqrt() + eps_);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

float clip_grad_norm(std::vector<ag::Var>& params, float max_norm) {
    double sq = 0.0;
    for (const auto& p : params)
        if (p.has_grad()) sq += p.grad().matrix().squaredNorm();
    const float norm = static_cast<float>(std::sqrt(sq));
    if (norm > max_norm && norm > 0.0f) {
        const float s = max_norm / norm;
        for (auto& p : params)
            if (p.has_grad()) p.node()->grad *= s;
    }
    return norm;
}

void check_finite(const std::string& term, double value) {
    if (!std::isfinite(value)) {
        fail(ErrorCode::TrainingDivergence, "loss term '" + term + "' is not finite");
    }
}

std::string config_hash(const nlohmann::json& config) {
    const std::string text = config.dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     const nlohmann::json& config, const std::vector<const ParamSet*>& sets,
                     const nlohmann::json& extra) {
    nlohmann::json tensors = nlohmann::json::array();
    std::vector<float> payload;
    for (const ParamSet* ps : sets) {
        for (const auto& p : ps->all()) {
            const auto& s = p.var.shape();
            tensors.push_back({{"name", p.name}, {"shape", {s.n, s.c, s.h, s.w}}});
        }
        auto flat = ps->flatten();
        payload.insert(payload.end(), flat.begin(), flat.end());
    }
    nlohmann::json header = {{"format", "nh-checkpoint"},
                             {"version", kCheckpointVersion},
                             {"kind", kind},
                             {"config", config},
                             {"config_hash", config_hash(config)},
                             {"tensors", tensors},
                             {"extra", extra}};
    write_container(path, kCheckpointMagic, header, payload);
}

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
    return read_container(path, kCheckpointMagic).header;
}

nlohmann::json load_checkpoint(const std::filesystem::path& path, const std::string& kind,
                               const std::vector<ParamSet*>& sets) {
    Container c = read_container(path, kCheckpointMagic);
    const auto& h = c.header;
    if (h.value("version", -1) != kCheckpointVersion) {
        fail(ErrorCode::VersionMismatch, path.string() + ": unsupported checkpoint version");
    }
    if (h.value("kind", "") != kind) {
        fail(ErrorCode::BadFormat, path.string() + ": checkpoint holds '" +
                                       h.value("kind", "") + "', expected '" + kind + "'");
    }
    const auto& tensors = h.at("tensors");
    std::size_t ti = 0, off = 0;
    for (ParamSet* ps : sets) {
        for (auto& p : ps->all()) {
            if (ti >= tensors.size() || tensors[ti]["name"] != p.name) {
                fail(ErrorCode::ShapeMismatch,
                     path.string() + ": tensor layout differs at '" + p.name + "'");
            }
            const auto shp = tensors[ti]["shape"].get<std::vector<int>>();
            const auto& s = p.var.shape();
            if (shp != std::vector<int>{s.n, s.c, s.h, s.w}) {
                fail(ErrorCode::ShapeMismatch, path.string() + ": shape differs for " + p.name);
            }
            auto& v = p.var.mutable_value();
            std::copy(c.payload.begin() + off, c.payload.begin() + off + v.size(), v.data());
            off += v.size();
            ++ti;
        }
    }
    if (ti != tensors.size() || off != c.payload.size()) {
        fail(ErrorCode::ShapeMismatch, path.string() + ": checkpoint has extra tensors");
    }
    return h;
}

}  // namespace nh::nn
