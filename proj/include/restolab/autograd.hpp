#ifndef RESTOLAB_AUTOGRAD_HPP
#define RESTOLAB_AUTOGRAD_HPP

#include <functional>
#include <memory>
#include <vector>

#include "restolab/tensor.hpp"

namespace restolab {

// Reverse-mode autograd node. Values are computed eagerly; backward walks the
// recorded graph in reverse topological order. Nodes with requires_grad ==
// false terminate gradient flow (frozen backbones, detached targets).
struct Node {
    Tensor value;
    Tensor grad; // allocated lazily by backward()
    bool requires_grad{false};
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop; // reads this->grad, accumulates into parents

    Tensor& ensure_grad() {
        // scalars have shape [] which matches a default-constructed tensor, so
        // compare sizes too
        if (!grad.same_shape(value) || grad.size() != value.size())
            grad = Tensor(value.shape());
        return grad;
    }
};

using Var = std::shared_ptr<Node>;

inline Var make_leaf(Tensor v, bool requires_grad = true) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return n;
}

inline Var make_const(Tensor v) { return make_leaf(std::move(v), false); }

inline bool any_requires_grad(const std::vector<Var>& parents) {
    for (const auto& p : parents)
        if (p->requires_grad) return true;
    return false;
}

// Builds an op node. The backprop lambda is only attached when some parent
// participates in gradient flow.
inline Var make_op(Tensor value, std::vector<Var> parents,
                   std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    n->requires_grad = any_requires_grad(n->parents);
    if (n->requires_grad) n->backprop = std::move(backprop);
    return n;
}

// Runs backpropagation from a scalar root. Seeds d(root)/d(root) = 1.
void backward(const Var& root);

// Clears accumulated gradients on a parameter set.
void zero_grad(const std::vector<Var>& params);

} // namespace restolab

#endif
