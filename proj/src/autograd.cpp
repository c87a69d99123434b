#include "restolab/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace restolab {

namespace {

// Iterative post-order DFS; children (parents in graph terms) come before the
// node that consumed them, so reversing gives a valid backward order.
void topo_sort(const Var& root, std::vector<Node*>& order) {
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        Node* node = stack.back().first;
        size_t& next = stack.back().second;
        if (next < node->parents.size()) {
            Node* p = node->parents[next].get();
            ++next; // advance before the stack may reallocate
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, size_t{0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

} // namespace

void backward(const Var& root) {
    if (!root) throw std::invalid_argument("backward: null root");
    if (root->value.size() != 1)
        throw std::invalid_argument("backward: root must be scalar, got " +
                                    root->value.shape_str());
    if (!root->requires_grad) return;

    std::vector<Node*> order;
    topo_sort(root, order);

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

void zero_grad(const std::vector<Var>& params) {
    for (const auto& p : params)
        if (!p->grad.empty()) p->grad.fill(0.0);
}

} // namespace restolab
