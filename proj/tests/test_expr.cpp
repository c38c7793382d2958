#include <doctest.h>

#include <cmath>

#include "nh/core/rng.hpp"
#include "nh/expr/loss.hpp"
#include "nh/expr/model.hpp"
#include "nh/synth/puppet.hpp"

using namespace nh;
using namespace nh::expr;

namespace {

ExprConfig small_config(int crop = 16) {
    ExprConfig c;
    c.crop = crop;
    c.base_filters = 4;
    c.hidden = 64;
    c.disc_filters = 4;
    c.batch = 8;
    c.seed = 5;
    return c;
}

// Mouth crops of random shapes; expression k uses a fixed b per k.
std::vector<ExprSample> mouth_samples(int n, int crop, std::uint64_t seed, int distinct = 0) {
    Rng rng(seed);
    const synth::Appearance look{64, 64, synth::Style::Neutral};
    std::vector<BlendshapeWeights> pool;
    for (int k = 0; k < (distinct ? distinct : n); ++k) {
        BlendshapeWeights b;
        b << float(rng.uniform(0, 1)), float(rng.uniform(-0.6, 0.9)), float(rng.uniform(0, 1)),
            float(rng.uniform(0.3, 0.8)), float(rng.uniform(0.2, 0.8)), float(rng.uniform(0, 1));
        pool.push_back(b);
    }
    std::vector<ExprSample> out;
    for (int i = 0; i < n; ++i) {
        const auto& b = pool[distinct ? i % distinct : i];
        out.push_back({b, synth::mouth_crop(look, b, crop)});
    }
    return out;
}

Eigen::ArrayXd numeric_grad(const std::function<double(const Eigen::ArrayXd&)>& f,
                            Eigen::ArrayXd x, double eps = 1e-3) {
    Eigen::ArrayXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double s = x[i];
        x[i] = s + eps;
        const double up = f(x);
        x[i] = s - eps;
        const double dn = f(x);
        x[i] = s;
        g[i] = (up - dn) / (2 * eps);
    }
    return g;
}

double rel_err(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
    return (a - b).abs().maxCoeff() / std::max(1e-12, std::max(a.abs().maxCoeff(), b.abs().maxCoeff()));
}

ExprOutputs leaf_outputs(const Eigen::ArrayXf& tex, int crop, const Eigen::ArrayXf& b,
                         const Eigen::ArrayXf& mu, const Eigen::ArrayXf& lv) {
    const int latent = int(mu.size());
    return {ag::Var::parameter({1, 3, crop, crop}, tex), ag::Var::parameter({1, 6, 1, 1}, b),
            ag::Var::parameter({1, latent, 1, 1}, mu), ag::Var::parameter({1, latent, 1, 1}, lv)};
}

}  // namespace

TEST_CASE("untrained encoder and decoder contracts") {
    const auto model = make_untrained(small_config());
    ExprSample zero{BlendshapeWeights::Zero(), ImageF(16, 16, 3, 0.0f)};
    const LatentGaussian g = encode(*model, zero);
    CHECK(g.mu.size() == kExprDim);
    CHECK(g.mu.allFinite());
    CHECK(g.log_var.allFinite());
    CHECK(g.log_var.maxCoeff() <= 10.0f);
    CHECK(g.log_var.minCoeff() >= -10.0f);
    CHECK(encode(*model, zero).mu == g.mu);

    const Decoded d = decode(*model, Eigen::VectorXf::Zero(kExprDim));
    CHECK(d.tex.data().minCoeff() >= 0.0f);
    CHECK(d.tex.data().maxCoeff() <= 1.0f);
    CHECK(d.b.allFinite());
    const Decoded d2 = decode(*model, Eigen::VectorXf::Zero(kExprDim));
    CHECK((d.tex.data() == d2.tex.data()).all());

    ExprSample wrong{BlendshapeWeights::Zero(), ImageF(32, 32, 3, 0.0f)};
    CHECK_THROWS_AS(encode(*model, wrong), Error);
    try {
        decode(*model, Eigen::VectorXf::Zero(255));
        FAIL("expected a rejection");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ShapeMismatch);
    }
}

TEST_CASE("expr_loss terms at known points") {
    const int s = 4;
    Rng rng(3);
    Eigen::ArrayXf tex(3 * s * s), b(6);
    for (auto& v : tex) v = float(rng.uniform());
    for (auto& v : b) v = float(rng.uniform(-1, 1));
    const ag::Var tt = ag::Var::constant({1, 3, s, s}, tex), tb = ag::Var::constant({1, 6, 1, 1}, b);

    SUBCASE("perfect reconstruction with a standard-normal posterior") {
        const auto out = leaf_outputs(tex, s, b, Eigen::ArrayXf::Zero(256), Eigen::ArrayXf::Zero(256));
        const auto t = expr_loss(tt, tb, out, {}, nullptr).terms;
        CHECK(t.l1_tex == 0.0);
        CHECK(t.mse_shape == 0.0);
        CHECK(t.kl == 0.0);
        CHECK(t.total == 0.0);
    }
    SUBCASE("unit mean gives 0.5 per dimension") {
        const auto out = leaf_outputs(tex, s, b, Eigen::ArrayXf::Ones(256), Eigen::ArrayXf::Zero(256));
        CHECK(expr_loss(tt, tb, out, {}, nullptr).terms.kl == doctest::Approx(0.5 * 256));
    }
    SUBCASE("black against white") {
        const ag::Var white = ag::Var::constant({1, 3, 64, 64}, 1.0f);
        const auto out = leaf_outputs(Eigen::ArrayXf::Zero(3 * 64 * 64), 64, b,
                                      Eigen::ArrayXf::Zero(256), Eigen::ArrayXf::Zero(256));
        CHECK(expr_loss(white, tb, out, {}, nullptr).terms.l1_tex == 1.0);
    }
}

TEST_CASE("kl matches the per-dimension formula") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::ArrayXd mu(256), lv(256);
        for (auto& v : mu) v = rng.uniform(-3, 3);
        for (auto& v : lv) v = rng.uniform(-5, 5);
        double oracle = 0.0;
        for (int i = 0; i < 256; ++i) {
            const double var = std::exp(lv[i]);
            oracle += 0.5 * (mu[i] * mu[i] + var - std::log(var) - 1.0);
        }
        CHECK(kl_value(mu, lv, 1) == doctest::Approx(oracle).epsilon(1e-12));
        // The float graph op agrees to float precision.
        const auto out = leaf_outputs(Eigen::ArrayXf::Zero(48), 4, Eigen::ArrayXf::Zero(6),
                                      mu.cast<float>(), lv.cast<float>());
        const double graph = expr_loss(ag::Var::constant({1, 3, 4, 4}, 0.0f),
                                       ag::Var::constant({1, 6, 1, 1}, 0.0f), out, {}, nullptr)
                                 .terms.kl;
        CHECK(std::abs(graph - oracle) <= 1e-6 * std::max(1.0, oracle));
    }
}

TEST_CASE("analytic gradients of the reconstruction terms") {
    Rng rng(12);
    const int s = 4;
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::ArrayXd pred(3 * s * s), target(3 * s * s);
        for (Eigen::Index i = 0; i < pred.size(); ++i) {
            target[i] = rng.uniform();
            // Keep |pred - target| > eps away from the L1 kink.
            pred[i] = target[i] + (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.01, 0.5);
        }
        CHECK(rel_err(l1_grad(pred, target),
                      numeric_grad([&](const auto& x) { return l1_value(x, target); }, pred)) < 1e-3);

        Eigen::ArrayXd b(6), bt(6);
        for (auto& v : b) v = rng.uniform(-1, 1);
        for (auto& v : bt) v = rng.uniform(-1, 1);
        CHECK(rel_err(mse_grad(b, bt),
                      numeric_grad([&](const auto& x) { return mse_value(x, bt); }, b)) < 1e-3);

        Eigen::ArrayXd mu(16), lv(16);
        for (auto& v : mu) v = rng.uniform(-2, 2);
        for (auto& v : lv) v = rng.uniform(-2, 2);
        CHECK(rel_err(gaussian_kl_grad_mu(mu),
                      numeric_grad([&](const auto& x) { return kl_value(x, lv, 1); }, mu)) < 1e-3);
        CHECK(rel_err(gaussian_kl_grad_log_var(lv),
                      numeric_grad([&](const auto& x) { return kl_value(mu, x, 1); }, lv)) < 1e-3);

        // Backprop through the graph loss reproduces the analytic gradients.
        const auto out = leaf_outputs(pred.cast<float>(), s, b.cast<float>(), mu.cast<float>(),
                                      lv.cast<float>());
        const auto obj = expr_loss(ag::Var::constant({1, 3, s, s}, target.cast<float>()),
                                   ag::Var::constant({1, 6, 1, 1}, bt.cast<float>()), out,
                                   {1.0, 1.0, 0.0, 1.0}, nullptr);
        ag::backward(obj.total);
        CHECK(rel_err(out.tex.grad().cast<double>(), l1_grad(pred, target)) < 1e-5);
        CHECK(rel_err(out.b.grad().cast<double>(), mse_grad(b, bt)) < 1e-5);
        CHECK(rel_err(out.mu.grad().cast<double>(), gaussian_kl_grad_mu(mu)) < 1e-5);
        CHECK(rel_err(out.log_var.grad().cast<double>(), gaussian_kl_grad_log_var(lv)) < 1e-5);
    }
}

TEST_CASE("patch discriminator scores patches") {
    Rng rng(1);
    nn::PatchDiscriminator d(3, 4, rng);
    CHECK(d(ag::Var::constant({2, 3, 16, 16}, 0.5f)).shape() == ag::Shape{2, 1, 2, 2});
}

TEST_CASE("config flags and checkpoints") {
    ExprConfig c = small_config();
    CHECK(c.flags().empty());
    c.latent = 32;
    CHECK(c.flags().at("latent").at("non_paper") == true);
    CHECK(ExprConfig::from_json(c.to_json()).to_json() == c.to_json());

    const auto model = make_untrained(c);
    const auto path = std::filesystem::temp_directory_path() / "nh_test_expr.ckpt";
    save_expr(*model, path);
    CHECK(nn::read_checkpoint_header(path).at("extra").at("flags").contains("latent"));
    const auto back = load_expr(path);
    const ExprSample s = mouth_samples(1, 16, 4).front();
    CHECK(encode(*back, s).mu == encode(*model, s).mu);
    std::filesystem::remove(path);

    nlohmann::json j = c.to_json();
    j["version"] = 2;
    CHECK_THROWS_AS(ExprConfig::from_json(j), Error);
}

TEST_CASE("training errors") {
    const ExprConfig c = small_config();
    CHECK_THROWS_AS(train_expr_region({}, c), Error);
    auto bad = mouth_samples(8, 16, 2);
    bad[3].tex(0, 2, 2) = std::nanf("");
    try {
        train_expr_region(bad, c);
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TrainingDivergence);
        CHECK(std::string(e.what()).find("l1_tex") != std::string::npos);
    }
}

TEST_CASE("toy training: reconstruction, determinism, latent geometry") {
    ExprConfig c = small_config();
    c.base_filters = 8;
    c.epochs = 30;
    const auto train = mouth_samples(512, 16, 10);
    const auto val = mouth_samples(64, 16, 11);

    const auto a = train_expr_region(train, c);
    const auto b = train_expr_region(train, c);
    CHECK(a.final_loss == b.final_loss);

    const double trained = evaluate_expr(*a.model, val).l1_tex;
    const double untrained = evaluate_expr(*make_untrained(c), val).l1_tex;
    MESSAGE("val l1_tex trained " << trained << " untrained " << untrained);
    CHECK(trained * 5.0 <= untrained);

    // Same expression twice vs two different expressions.
    const auto pairs = mouth_samples(40, 16, 12, 20);
    double same = 0.0, diff = 0.0;
    for (int k = 0; k < 20; ++k) {
        const auto mk = encode(*a.model, pairs[k]).mu;
        same += (mk - encode(*a.model, pairs[k + 20]).mu).norm();
        diff += (mk - encode(*a.model, pairs[(k + 1) % 20]).mu).norm();
    }
    CHECK(same < diff);
}
