#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "icsl/tensor.hpp"

namespace icsl {

// Dynamic reverse-mode tape. Parameters are persistent leaf nodes; every
// forward pass builds a fresh graph of op nodes on top of them, and the
// graph is dropped when the loss Variable goes out of scope.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    bool grad_allocated = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward_fn;
    const char* op_name = "leaf";

    Tensor& ensure_grad();
};

using NodePtr = std::shared_ptr<Node>;

class Variable {
public:
    Variable() = default;

    static Variable leaf(Tensor value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    Tensor& value() { return node_->value; }
    const Tensor& value() const { return node_->value; }
    Tensor& grad() { return node_->ensure_grad(); }
    const Tensor& grad() const { return node_->ensure_grad(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    void zero_grad();

    // Leaf copy of the current value, cut off from the tape.
    Variable detached() const;

    const Shape& shape() const { return node_->value.shape; }

    NodePtr node() const { return node_; }
    explicit Variable(NodePtr n) : node_(std::move(n)) {}

private:
    NodePtr node_;
};

// Builds an op node. requires_grad is inherited from the parents.
Variable make_op(Tensor value, std::vector<Variable> parents, std::function<void(Node&)> backward,
                 const char* op_name);

// Reverse pass from a scalar root (numel == 1), seeding d(root)/d(root) = 1.
void backward(const Variable& root);

}  // namespace icsl
