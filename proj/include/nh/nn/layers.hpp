#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nh/ag/ops.hpp"
#include "nh/core/rng.hpp"

namespace nh::nn {

struct NamedParam {
    std::string name;
    ag::Var var;
};

// Owns the trainable tensors of one model, in registration order.
class ParamSet {
public:
    ag::Var add(const std::string& name, ag::Shape shape, Eigen::ArrayXf init);

    std::vector<NamedParam>& all() { return params_; }
    const std::vector<NamedParam>& all() const { return params_; }
    std::vector<ag::Var> vars() const;
    Eigen::Index count() const;
    void zero_grad();

    // Flattened copy of every value, in registration order.
    std::vector<float> flatten() const;
    void assign(std::span<const float> flat);

private:
    std::vector<NamedParam> params_;
};

// He-uniform init, scaled by `gain`.
Eigen::ArrayXf he_uniform(Eigen::Index count, int fan_in, Rng& rng, double gain = 1.0);

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(ParamSet& ps, const std::string& name, int in, int out, int kh, int kw,
           ag::ConvSpec spec, Rng& rng, double gain = 1.0);

    ag::Var operator()(const ag::Var& x) const { return ag::conv2d(x, w_, b_, spec_); }
    int out_channels() const { return w_.shape().n; }

private:
    ag::Var w_, b_;
    ag::ConvSpec spec_;
};

// Temporal 1-D convolution on {N,C,1,T} with "same" padding when pad = k/2.
inline Conv2d conv1d(ParamSet& ps, const std::string& name, int in, int out, int kernel,
                     int pad, Rng& rng, double gain = 1.0) {
    return Conv2d(ps, name, in, out, 1, kernel, ag::ConvSpec{1, 1, 0, pad}, rng, gain);
}

class Linear {
public:
    Linear() = default;
    Linear(ParamSet& ps, const std::string& name, int in, int out, Rng& rng, double gain = 1.0);

    ag::Var operator()(const ag::Var& x) const { return ag::linear(x, w_, b_); }

private:
    ag::Var w_, b_;
};

class Adam {
public:
    Adam(std::vector<ag::Var> params, float lr, float beta1 = 0.9f, float beta2 = 0.999f,
         float eps = 1e-8f);

    void step();
    void zero_grad();
    void set_lr(float lr) { lr_ = lr; }
    float lr() const { return lr_; }
    long steps() const { return t_; }

private:
    std::vector<ag::Var> params_;
    std::vector<Eigen::ArrayXf> m_, v_;
    float lr_, b1_, b2_, eps_;
    long t_ = 0;
};

// Rescales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
float clip_grad_norm(std::vector<ag::Var>& params, float max_norm);

// Throws TrainingDivergence naming the term when value is not finite.
void check_finite(const std::string& term, double value);

// Stable 64-bit FNV-1a hash of the canonical JSON dump, hex encoded.
std::string config_hash(const nlohmann::json& config);

// Checkpoint: container with magic "CKPT"; header records the model kind,
// config, its hash, and the name/shape of every tensor.
void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     const nlohmann::json& config, const std::vector<const ParamSet*>& sets,
                     const nlohmann::json& extra = nlohmann::json::object());
// Restores values into sets whose layout must match; returns the header.
nlohmann::json load_checkpoint(const std::filesystem::path& path, const std::string& kind,
                               const std::vector<ParamSet*>& sets);
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

}  // namespace nh::nn
