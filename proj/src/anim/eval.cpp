#include "nh/anim/eval.hpp"

#include <set>

#include "nh/core/error.hpp"

namespace nh::anim {

nlohmann::json MouthEval::to_json() const {
    return {{"mse", mse}, {"baseline_mse", baseline_mse}, {"ratio", ratio()}};
}

MouthEval evaluate_mouth(const AnimModel& model, const std::vector<Take>& takes) {
    require(!takes.empty(), ErrorCode::EmptyDataset, "evaluate_mouth: no takes");
    MouthEval e;
    double n = 0;
    for (const auto& t : takes) {
        const StyleGaussian s = style_encode(model, t.seq);
        const AnimOutput out = animate(model, t.visemes, s.mu);
        const Eigen::MatrixXf gt = t.seq.to_matrix().middleCols(kMouthOffset, kExprDim);
        e.mse += (out.x_mouth - gt).squaredNorm();
        e.baseline_mse += (gt.rowwise() - gt.colwise().mean()).squaredNorm();
        n += double(gt.size());
    }
    e.mse /= n;
    e.baseline_mse /= n;
    return e;
}

void LinearProbe::fit(const Eigen::MatrixXf& x, const std::vector<int>& y, int classes, double l2,
                      int iterations) {
    require(x.rows() == Eigen::Index(y.size()) && x.rows() > 0, ErrorCode::ShapeMismatch,
            "probe: sample and label counts differ");
    mean_ = x.colwise().mean().transpose();
    scale_ = ((x.rowwise() - mean_.transpose()).colwise().squaredNorm() / float(x.rows()))
                 .transpose()
                 .unaryExpr([](float v) { return v > 1e-12f ? std::sqrt(v) : 1.0f; });
    const Eigen::MatrixXf xs = (x.rowwise() - mean_.transpose()).array().rowwise() / scale_.transpose().array();
    const Eigen::Index n = xs.rows(), d = xs.cols();
    Eigen::MatrixXf onehot = Eigen::MatrixXf::Zero(n, classes);
    for (Eigen::Index i = 0; i < n; ++i) onehot(i, y[i]) = 1.0f;
    w_ = Eigen::MatrixXf::Zero(d, classes);
    b_ = Eigen::VectorXf::Zero(classes);
    const float step = 0.5f;
    for (int it = 0; it < iterations; ++it) {
        Eigen::MatrixXf logits = (xs * w_).rowwise() + b_.transpose();
        logits = logits.colwise() - logits.rowwise().maxCoeff();
        Eigen::MatrixXf p = logits.array().exp();
        p = p.array().colwise() / p.rowwise().sum().array();
        const Eigen::MatrixXf g = (p - onehot) / float(n);
        w_ -= step * (xs.transpose() * g + float(l2) * w_);
        b_ -= step * g.colwise().sum().transpose();
    }
}

int LinearProbe::predict(const Eigen::VectorXf& x) const {
    const Eigen::VectorXf xs = (x - mean_).cwiseQuotient(scale_);
    Eigen::Index best;
    (w_.transpose() * xs + b_).maxCoeff(&best);
    return int(best);
}

double LinearProbe::accuracy(const Eigen::MatrixXf& x, const std::vector<int>& y) const {
    int hit = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) hit += predict(x.row(i).transpose()) == y[i];
    return double(hit) / double(x.rows());
}

double probe_accuracy(const Eigen::MatrixXf& x, const std::vector<int>& y, int classes,
                      const std::vector<int>& groups) {
    const std::set<int> folds(groups.begin(), groups.end());
    require(folds.size() >= 2, ErrorCode::InvalidArgument, "probe needs at least two groups");
    int hit = 0;
    for (int g : folds) {
        std::vector<Eigen::Index> tr, te;
        for (std::size_t i = 0; i < groups.size(); ++i) (groups[i] == g ? te : tr).push_back(Eigen::Index(i));
        Eigen::MatrixXf xtr(tr.size(), x.cols()), xte(te.size(), x.cols());
        std::vector<int> ytr, yte;
        for (std::size_t i = 0; i < tr.size(); ++i) xtr.row(i) = x.row(tr[i]), ytr.push_back(y[tr[i]]);
        for (std::size_t i = 0; i < te.size(); ++i) xte.row(i) = x.row(te[i]), yte.push_back(y[te[i]]);
        LinearProbe p;
        p.fit(xtr, ytr, classes);
        hit += int(std::lround(p.accuracy(xte, yte) * double(te.size())));
    }
    return double(hit) / double(x.rows());
}

nlohmann::json DisentanglementEval::to_json() const {
    return {{"style_accuracy", style_accuracy},
            {"content_accuracy", content_accuracy},
            {"content_chance", content_chance}};
}

DisentanglementEval evaluate_disentanglement(const AnimModel& model, const ProbeSet& probes) {
    require(!probes.clips.empty(), ErrorCode::EmptyDataset, "no probe clips");
    Eigen::MatrixXf mu(probes.clips.size(), model.config.style_dim);
    for (std::size_t i = 0; i < probes.clips.size(); ++i)
        mu.row(i) = style_encode(model, probes.clips[i].seq).mu.transpose();
    DisentanglementEval e;
    e.style_accuracy = probe_accuracy(mu, probes.style, probes.styles, probes.group);
    e.content_accuracy = probe_accuracy(mu, probes.content, probes.contents, probes.group);
    e.content_chance = 1.0 / probes.contents;
    return e;
}

nlohmann::json ConsistencyEval::to_json() const { return {{"intra", intra}, {"inter", inter}}; }

ConsistencyEval evaluate_consistency(const AnimModel& model,
                                     const std::vector<Eigen::VectorXf>& style_vectors,
                                     const std::vector<VisemeSequence>& sentences) {
    require(style_vectors.size() >= 2 && sentences.size() >= 2, ErrorCode::InvalidArgument,
            "consistency needs two styles and two sentences");
    std::vector<std::vector<Eigen::VectorXf>> enc(style_vectors.size());
    for (std::size_t s = 0; s < style_vectors.size(); ++s)
        for (const auto& v : sentences)
            enc[s].push_back(style_encode(model, full_decode(model, animate(model, v, style_vectors[s]))).mu);
    double intra = 0, inter = 0;
    long ni = 0, nx = 0;
    for (std::size_t s = 0; s < enc.size(); ++s)
        for (std::size_t t = 0; t < enc.size(); ++t)
            for (std::size_t a = 0; a < sentences.size(); ++a)
                for (std::size_t b = 0; b < sentences.size(); ++b) {
                    if (a == b) continue;
                    const double d = (enc[s][a] - enc[t][b]).norm();
                    if (s == t) intra += d, ++ni;
                    else inter += d, ++nx;
                }
    return {intra / double(ni), inter / double(nx)};
}

double mean_sq_second_difference(const Eigen::MatrixXf& x) {
    if (x.rows() < 3) return 0.0;
    const Eigen::Index n = x.rows() - 2;
    const Eigen::MatrixXf d2 = x.bottomRows(n) - 2.0f * x.middleRows(1, n) + x.topRows(n);
    return double(d2.squaredNorm()) / double(d2.size());
}

nlohmann::json JerkEval::to_json() const { return {{"eyes_ratio", eyes_ratio}, {"pose_ratio", pose_ratio}}; }

JerkEval evaluate_jerk(const AnimModel& model, const std::vector<Take>& takes, double sigma,
                       std::uint64_t seed) {
    Rng rng(seed);
    JerkEval e;
    for (Part part : {Part::Eyes, Part::Pose}) {
        const int off = part == Part::Eyes ? kEyesOffset : kPoseOffset;
        const int dim = part == Part::Eyes ? kExprDim : kPoseDim;
        double clean = 0, noisy = 0;
        for (const auto& t : takes) {
            const Eigen::MatrixXf x = t.seq.to_matrix().middleCols(off, dim);
            const Eigen::MatrixXf z = vsae_encode(model, part, x).mu;
            Eigen::MatrixXf zn = z;
            for (Eigen::Index i = 0; i < zn.size(); ++i) zn.data()[i] += float(sigma * rng.normal());
            // Compare in standardised units so every dimension counts alike.
            clean += mean_sq_second_difference(model.norm.apply(vsae_decode(model, part, z), off));
            noisy += mean_sq_second_difference(model.norm.apply(vsae_decode(model, part, zn), off));
        }
        (part == Part::Eyes ? e.eyes_ratio : e.pose_ratio) = clean > 0 ? noisy / clean : 0.0;
    }
    return e;
}

}  // namespace nh::anim
