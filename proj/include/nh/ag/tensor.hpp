#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace nh::ag {

// NCHW shape. Vectors are {n, f, 1, 1}; sequences are {n, c, 1, t}.
struct Shape {
    int n = 1, c = 1, h = 1, w = 1;

    Eigen::Index size() const { return Eigen::Index(n) * c * h * w; }
    Eigen::Index plane() const { return Eigen::Index(h) * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

struct Node {
    Shape shape;
    Eigen::ArrayXf value;
    Eigen::ArrayXf grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    Eigen::ArrayXf& grad_buffer() {
        if (grad.size() != value.size()) grad = Eigen::ArrayXf::Zero(value.size());
        return grad;
    }
    bool has_grad() const { return grad.size() == value.size() && value.size() > 0; }
};

// Handle to a node in the dynamic graph. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Var constant(Shape shape, Eigen::ArrayXf value);
    static Var constant(Shape shape, float fill);
    static Var parameter(Shape shape, Eigen::ArrayXf value);

    const Shape& shape() const { return node_->shape; }
    const Eigen::ArrayXf& value() const { return node_->value; }
    Eigen::ArrayXf& mutable_value() { return node_->value; }
    const Eigen::ArrayXf& grad() const { return node_->grad; }
    bool has_grad() const { return node_->has_grad(); }
    bool requires_grad() const { return node_->requires_grad; }
    float item() const { return node_->value[0]; }
    Eigen::Index size() const { return node_->value.size(); }

    void zero_grad() { node_->grad.setZero(); }
    Var detach() const { return constant(shape(), value()); }

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& shared() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<Node> node_;
};

bool grad_enabled();

// Disables graph recording in scope (inference).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Builds a result node. The backward closure reads self.grad and accumulates
// into self.parents[i]->grad_buffer() for parents that require grad. It is
// dropped when no parent requires grad or recording is disabled.
Var make_op(Shape shape, Eigen::ArrayXf value, std::vector<Var> parents,
            std::function<void(Node&)> backward);

// Reverse-mode sweep from a scalar root.
void backward(const Var& root, float seed = 1.0f);

}  // namespace nh::ag
