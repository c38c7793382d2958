#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "nh/anim/model.hpp"

namespace nh::anim {

struct MouthEval {
    double mse = 0;           // animate() with the take's own style vector
    double baseline_mse = 0;  // per-take temporal mean of every dimension
    double ratio() const { return baseline_mse > 0 ? mse / baseline_mse : 0.0; }
    nlohmann::json to_json() const;
};
MouthEval evaluate_mouth(const AnimModel& model, const std::vector<Take>& takes);

// Multinomial logistic regression on standardised features (full-batch
// gradient descent with L2), the linear probe for style/content.
class LinearProbe {
public:
    void fit(const Eigen::MatrixXf& x, const std::vector<int>& y, int classes, double l2 = 1e-2,
             int iterations = 500);
    int predict(const Eigen::VectorXf& x) const;
    double accuracy(const Eigen::MatrixXf& x, const std::vector<int>& y) const;

private:
    Eigen::VectorXf mean_, scale_;
    Eigen::MatrixXf w_;  // d x K
    Eigen::VectorXf b_;
};

// Leave-one-group-out accuracy; rows of x are samples.
double probe_accuracy(const Eigen::MatrixXf& x, const std::vector<int>& y, int classes,
                      const std::vector<int>& groups);

struct ProbeSet {
    std::vector<Take> clips;
    std::vector<int> style, content, group;  // hidden labels and CV folds
    int styles = 0, contents = 0;
};

struct DisentanglementEval {
    double style_accuracy = 0, content_accuracy = 0, content_chance = 0;
    nlohmann::json to_json() const;
};
// Style mu of every ground-truth probe clip, probed for style and content.
DisentanglementEval evaluate_disentanglement(const AnimModel& model, const ProbeSet& probes);

struct ConsistencyEval {
    double intra = 0, inter = 0;
    nlohmann::json to_json() const;
};
// For each style s (mean style mu of its reference takes) animate every probe
// sentence, re-encode the outputs and compare distances within vs across styles.
ConsistencyEval evaluate_consistency(const AnimModel& model,
                                     const std::vector<Eigen::VectorXf>& style_vectors,
                                     const std::vector<VisemeSequence>& sentences);

struct JerkEval {
    double eyes_ratio = 0, pose_ratio = 0;  // perturbed / clean
    nlohmann::json to_json() const;
};
// Mean squared second difference of decodes from latents perturbed with
// N(0, sigma^2) relative to the clean decode.
JerkEval evaluate_jerk(const AnimModel& model, const std::vector<Take>& takes, double sigma,
                       std::uint64_t seed);

double mean_sq_second_difference(const Eigen::MatrixXf& x);

}  // namespace nh::anim
