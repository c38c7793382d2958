#include <doctest.h>

#include <functional>

#include "nh/ag/kl.hpp"
#include "nh/ag/ops.hpp"
#include "nh/core/error.hpp"
#include "nh/core/rng.hpp"
#include "nh/nn/layers.hpp"

using namespace nh;
using namespace nh::ag;

namespace {

Var random_param(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Eigen::ArrayXf v(s.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = float(rng.uniform(lo, hi));
    return Var::parameter(s, v);
}

// Max relative error between backprop and central differences of
// sum(probe * f(inputs)). Float tensors, so tolerances are loose.
double gradcheck(const std::function<Var(const std::vector<Var>&)>& f, std::vector<Var> inputs,
                 float eps = 1e-2f) {
    Rng rng(99);
    Var out0 = f(inputs);
    Eigen::ArrayXf probe(out0.size());
    for (Eigen::Index i = 0; i < probe.size(); ++i) probe[i] = float(rng.uniform(0.5, 1.5));
    auto scalar = [&]() {
        Var o = f(inputs);
        return sum(mul(o, Var::constant(o.shape(), probe)));
    };
    for (auto& v : inputs) v.zero_grad();
    backward(scalar());
    double worst = 0.0;
    for (auto& v : inputs) {
        const Eigen::ArrayXf analytic = v.grad();
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            const float saved = v.value()[i];
            v.mutable_value()[i] = saved + eps;
            double up;
            double dn;
            {
                NoGradGuard g;
                up = scalar().item();
                v.mutable_value()[i] = saved - eps;
                dn = scalar().item();
            }
            v.mutable_value()[i] = saved;
            const double numeric = (up - dn) / (2.0 * eps);
            const double denom = std::max(1.0, std::abs(numeric));
            worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("conv2d forward matches direct convolution") {
    Rng rng(1);
    Var x = random_param({2, 3, 5, 6}, rng);
    Var w = random_param({4, 3, 3, 3}, rng);
    Var b = random_param({4, 1, 1, 1}, rng);
    Var y = conv2d(x, w, b, {2, 2, 1, 1});
    REQUIRE(y.shape() == Shape{2, 4, 3, 3});
    for (int n = 0; n < 2; ++n)
        for (int o = 0; o < 4; ++o)
            for (int oy = 0; oy < 3; ++oy)
                for (int ox = 0; ox < 3; ++ox) {
                    double acc = b.value()[o];
                    for (int c = 0; c < 3; ++c)
                        for (int i = 0; i < 3; ++i)
                            for (int j = 0; j < 3; ++j) {
                                const int iy = oy * 2 - 1 + i, ix = ox * 2 - 1 + j;
                                if (iy < 0 || iy >= 5 || ix < 0 || ix >= 6) continue;
                                acc += w.value()[((o * 3 + c) * 3 + i) * 3 + j] *
                                       x.value()[((n * 3 + c) * 5 + iy) * 6 + ix];
                            }
                    CHECK(y.value()[((n * 4 + o) * 3 + oy) * 3 + ox] ==
                          doctest::Approx(acc).epsilon(1e-5));
                }
}

TEST_CASE("op gradients match finite differences") {
    Rng rng(2);
    SUBCASE("conv2d strided, padded") {
        auto err = gradcheck([](const auto& v) { return conv2d(v[0], v[1], v[2], {2, 1, 1, 2}); },
                             {random_param({2, 2, 5, 4}, rng), random_param({3, 2, 3, 2}, rng),
                              random_param({3, 1, 1, 1}, rng)});
        CHECK(err < 2e-2);
    }
    SUBCASE("1-D conv on sequences") {
        auto err = gradcheck([](const auto& v) { return conv2d(v[0], v[1], v[2], {1, 1, 0, 4}); },
                             {random_param({2, 3, 1, 12}, rng), random_param({2, 3, 1, 9}, rng),
                              random_param({2, 1, 1, 1}, rng)});
        CHECK(err < 2e-2);
    }
    SUBCASE("pool / upsample") {
        auto err = gradcheck([](const auto& v) { return upsample(avg_pool(v[0], 2, 2), 2, 1); },
                             {random_param({1, 2, 4, 6}, rng)});
        CHECK(err < 2e-2);
    }
    SUBCASE("pointwise nonlinearities") {
        auto err = gradcheck(
            [](const auto& v) {
                return add(add(tanh(v[0]), sigmoid(v[0])),
                           add(leaky_relu(v[0], 0.2f), mul(exp(v[0]), square(v[0]))));
            },
            {random_param({1, 2, 3, 3}, rng)});
        CHECK(err < 2e-2);
    }
    SUBCASE("channel softmax") {
        auto err = gradcheck([](const auto& v) { return softmax_channels(v[0]); },
                             {random_param({2, 3, 2, 2}, rng, -2, 2)});
        CHECK(err < 2e-2);
    }
    SUBCASE("concat / slice / reshape / broadcast / mean_hw") {
        auto err = gradcheck(
            [](const auto& v) {
                Var c = concat_channels({v[0], v[1]});
                Var s = slice_channels(c, 1, 2);
                Var t = slice_width(s, 1, 3);
                Var m = mean_hw(t);
                return add(reshape(broadcast_width(m, 2), Shape{2, 2, 1, 2}),
                           slice_width(slice_channels(v[0], 0, 2), 0, 2));
            },
            {random_param({2, 2, 1, 5}, rng), random_param({2, 1, 1, 5}, rng)});
        CHECK(err < 2e-2);
    }
    SUBCASE("linear and embedding") {
        std::vector<int> ids{0, 2, 1, 1, 2, 0};
        auto err = gradcheck(
            [&](const auto& v) {
                Var e = embedding(ids, 2, 3, v[2]);
                Var l = linear(v[0], v[1], Var());
                return add(mean_hw(e), l);
            },
            {random_param({2, 4, 1, 1}, rng), random_param({3, 4, 1, 1}, rng),
             random_param({3, 3, 1, 1}, rng)});
        CHECK(err < 2e-2);
    }
    SUBCASE("kl with reparameterization") {
        Eigen::ArrayXf eps = Eigen::ArrayXf::LinSpaced(8, -1, 1);
        auto err = gradcheck(
            [&](const auto& v) {
                return add(kl_standard_normal(v[0], v[1]),
                           mean(square(reparameterize(v[0], v[1], eps))));
            },
            {random_param({2, 4, 1, 1}, rng), random_param({2, 4, 1, 1}, rng)});
        CHECK(err < 2e-2);
    }
}

TEST_CASE("kl op averages over positions and sums over channels") {
    Var mu = Var::constant({2, 128, 1, 3}, 1.0f);
    Var lv = Var::constant({2, 128, 1, 3}, 0.0f);
    CHECK(kl_standard_normal(mu, lv).item() == doctest::Approx(0.5 * 128));
}

TEST_CASE("backward accumulates into shared parameters across uses") {
    Var p = Var::parameter({1, 1, 1, 1}, Eigen::ArrayXf::Constant(1, 3.0f));
    backward(add(mul(p, p), p));
    CHECK(p.grad()[0] == doctest::Approx(7.0));
    {
        NoGradGuard g;
        Var q = mul(p, p);
        CHECK_FALSE(q.requires_grad());
    }
}

TEST_CASE("adam minimizes a quadratic") {
    Var p = Var::parameter({1, 3, 1, 1}, Eigen::ArrayXf::Constant(3, 5.0f));
    nn::Adam opt({p}, 0.1f);
    for (int i = 0; i < 500; ++i) {
        opt.zero_grad();
        backward(sum(square(add_scalar(p, -1.0f))));
        opt.step();
    }
    CHECK((p.value() - 1.0f).abs().maxCoeff() < 1e-2f);
}

TEST_CASE("checkpoint round-trip and layout checks") {
    Rng rng(4);
    nn::ParamSet a;
    nn::Conv2d conv(a, "c", 2, 3, 3, 3, {}, rng);
    nn::Linear lin(a, "l", 4, 2, rng);
    auto path = std::filesystem::temp_directory_path() / "nh_ckpt_test.ckpt";
    nlohmann::json cfg = {{"x", 1}};
    nn::save_checkpoint(path, "toy", cfg, {&a});

    Rng rng2(5);
    nn::ParamSet b;
    nn::Conv2d conv2(b, "c", 2, 3, 3, 3, {}, rng2);
    nn::Linear lin2(b, "l", 4, 2, rng2);
    auto header = nn::load_checkpoint(path, "toy", {&b});
    CHECK(header["config_hash"] == nn::config_hash(cfg));
    CHECK(b.flatten() == a.flatten());

    nn::ParamSet wrong;
    nn::Linear lin3(wrong, "l", 4, 2, rng2);
    CHECK_THROWS_AS(nn::load_checkpoint(path, "toy", {&wrong}), Error);
    CHECK_THROWS_AS(nn::load_checkpoint(path, "other", {&b}), Error);
}
