#include "icsl/autograd.hpp"

#include <unordered_set>

#include "icsl/errors.hpp"

namespace icsl {

Tensor& Node::ensure_grad() {
    if (!grad_allocated) {
        grad = Tensor::zeros(value.shape);
        grad_allocated = true;
    }
    return grad;
}

Variable Variable::leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Variable(std::move(n));
}

void Variable::zero_grad() {
    if (node_ && node_->grad_allocated) {
        node_->grad.fill(0.0);
    }
}

Variable Variable::detached() const { return leaf(node_->value, false); }

Variable make_op(Tensor value, std::vector<Variable> parents, std::function<void(Node&)> backward,
                 const char* op_name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op_name = op_name;
    for (const Variable& p : parents) {
        if (p.defined()) {
            n->requires_grad = n->requires_grad || p.node()->requires_grad;
            n->parents.push_back(p.node());
        }
    }
    if (n->requires_grad) {
        n->backward_fn = std::move(backward);
    }
    return Variable(std::move(n));
}

void backward(const Variable& root) {
    if (!root.defined()) {
        throw NumericError("backward: undefined root");
    }
    if (root.value().numel() != 1) {
        throw NumericError("backward: root must be scalar, got shape " +
                           shape_str(root.value().shape));
    }
    if (!root.requires_grad()) {
        return;
    }

    // Iterative post-order over the requires_grad subgraph.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            Node* child = node->parents[next_child++].get();
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->ensure_grad().fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && node->grad_allocated) {
            node->backward_fn(*node);
        }
    }
}

}  // namespace icsl
