#pragma once

#include <span>
#include <vector>

#include "nh/ag/tensor.hpp"

namespace nh::ag {

struct ConvSpec {
    int stride_h = 1, stride_w = 1;
    int pad_h = 0, pad_w = 0;
};

// x {N,C,H,W}, weight {O,C,kh,kw}, bias {O,1,1,1} or empty.
Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvSpec spec = {});
Var avg_pool(const Var& x, int ph, int pw);
Var upsample(const Var& x, int fh, int fw);

Var relu(const Var& x);
Var leaky_relu(const Var& x, float slope = 0.2f);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var exp(const Var& x);
Var abs(const Var& x);
Var square(const Var& x);
Var clamp(const Var& x, float lo, float hi);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, float s);
Var add_scalar(const Var& x, float s);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(float s, const Var& x) { return scale(x, s); }
inline Var operator*(const Var& x, float s) { return scale(x, s); }

// Softmax across the channel axis at every (n, y, x).
Var softmax_channels(const Var& x);

Var concat_channels(const std::vector<Var>& xs);
Var slice_channels(const Var& x, int begin, int count);
Var slice_width(const Var& x, int begin, int count);
Var reshape(const Var& x, Shape shape);

// x {N,F,1,1}, weight {O,F,1,1}, bias {O,1,1,1} -> {N,O,1,1}.
Var linear(const Var& x, const Var& weight, const Var& bias);
// ids laid out n-major (N*T entries); table {V,D,1,1} -> {N,D,1,T}.
Var embedding(std::span<const int> ids, int n, int t, const Var& table);
// {N,C,1,1} -> {N,C,1,T}.
Var broadcast_width(const Var& x, int t);
// {N,C,H,W} -> {N,C,1,1}.
Var mean_hw(const Var& x);

Var sum(const Var& x);
Var mean(const Var& x);

Var l1_mean(const Var& a, const Var& b);
Var mse_mean(const Var& a, const Var& b);

// mu + exp(log_var / 2) * eps, eps supplied by the caller.
Var reparameterize(const Var& mu, const Var& log_var, const Eigen::ArrayXf& eps);

// Closed-form KL(N(mu, exp(log_var)) || N(0, 1)), summed over channels and
// averaged over the remaining (n, h, w) positions.
Var kl_standard_normal(const Var& mu, const Var& log_var);

}  // namespace nh::ag
