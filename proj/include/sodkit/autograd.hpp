#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "sodkit/tensor.hpp"

namespace sodkit {

// Reverse-mode tape. Each op result keeps its inputs alive and a closure that
// pushes the result's gradient into them. Leaves with requires_grad collect
// gradients across backward passes until zero_grad().
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    // Lazily allocated gradient buffer matching value's shape.
    Tensor& grad_buffer();
};

class Var {
  public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool defined() const { return static_cast<bool>(node_); }

    // Empty tensor when no gradient has reached this variable.
    const Tensor& grad() const { return node_->grad; }
    void zero_grad();

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& shared() const { return node_; }

    // Result of an op: recorded only when gradients are enabled and some input
    // requires them. The closure receives the result node.
    static Var from_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

  private:
    std::shared_ptr<Node> node_;
};

// Seeds d(root)/d(root) = 1 for every element and runs the tape in reverse.
void backward(const Var& root);
void backward(const Var& root, const Tensor& seed);

bool grad_enabled();

class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

}  // namespace sodkit
