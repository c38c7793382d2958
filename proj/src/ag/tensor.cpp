#include "nh/ag/tensor.hpp"

#include <unordered_set>

#include "nh/core/error.hpp"

namespace nh::ag {
namespace {
thread_local bool g_grad_enabled = true;
}

std::string Shape::str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + "]";
}

Var Var::constant(Shape shape, Eigen::ArrayXf value) {
    require(value.size() == shape.size(), ErrorCode::ShapeMismatch,
            "value size does not match shape " + shape.str());
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value = std::move(value);
    return Var(std::move(n));
}

Var Var::constant(Shape shape, float fill) {
    return constant(shape, Eigen::ArrayXf::Constant(shape.size(), fill));
}

Var Var::parameter(Shape shape, Eigen::ArrayXf value) {
    Var v = constant(shape, std::move(value));
    v.node_->requires_grad = true;
    v.node_->grad = Eigen::ArrayXf::Zero(v.size());
    return v;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_op(Shape shape, Eigen::ArrayXf value, std::vector<Var> parents,
            std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value = std::move(value);
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& p : parents) any = any || (p && p.requires_grad());
        if (any) {
            n->requires_grad = true;
            n->parents.reserve(parents.size());
            for (auto& p : parents) n->parents.push_back(p.shared());
            n->backward = std::move(backward);
        }
    }
    return Var(std::move(n));
}

void backward(const Var& root, float seed) {
    require(root.size() == 1, ErrorCode::ShapeMismatch, "backward needs a scalar root");
    if (!root.requires_grad()) return;

    // Iterative post-order DFS for a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
    visited.insert(root.node());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p && p->requires_grad && !visited.contains(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    // Interior nodes start from zero each sweep; leaves (parameters) accumulate.
    for (Node* n : order) {
        if (n->backward) n->grad = Eigen::ArrayXf::Zero(n->value.size());
    }
    root.node()->grad_buffer()[0] += seed;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward) n->backward(*n);
    }
}

}  // namespace nh::ag
