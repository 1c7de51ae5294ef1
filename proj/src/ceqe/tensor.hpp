// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode tensor graph. A Tensor is a cheap handle onto a shared Node;
// every operation allocates a fresh Node that remembers its inputs and a
// closure that pushes the node's gradient back into them.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ceqe::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad; // empty until a gradient reaches this node
    bool requires_grad = false;
    bool is_leaf = true;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    std::vector<double>& ensure_grad();
};

class Tensor {
public:
    Tensor() = default;

    /// Non-trainable leaf. Never accumulates gradient.
    static Tensor constant(Shape shape, std::vector<double> values);
    static Tensor zeros(Shape shape);
    /// Trainable leaf.
    static Tensor variable(Shape shape, std::vector<double> values);

    /// Builds an interior node. requires_grad is inherited from the inputs;
    /// when no input needs a gradient the backward closure is dropped.
    static Tensor from_op(const char* op, Shape shape, std::vector<double> values,
                          std::vector<Tensor> inputs, std::function<void(Node&)> backward);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->values.size(); }

    std::span<const double> values() const { return node_->values; }
    std::span<double> mutable_values() { return node_->values; }
    /// Empty when no gradient has been accumulated.
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->grad; }
    void zero_grad();

    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    double item() const;
    double at(std::size_t row, std::size_t col) const;

    Node* node() const noexcept { return node_.get(); }
    const std::shared_ptr<Node>& shared_node() const noexcept { return node_; }

private:
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    std::shared_ptr<Node> node_;
};

/// Trainable tensor plus its Adam state.
struct Parameter {
    Parameter(std::string name, Shape shape);

    std::string name;
    Tensor tensor;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    std::uint64_t step_count = 0;

    std::size_t size() const { return tensor.size(); }
    const Shape& shape() const { return tensor.shape(); }
};

/// Reverse sweep from a scalar. Leaf gradients accumulate across calls;
/// interior gradients are reset on every call.
void backward(const Tensor& loss);

} // namespace ceqe::ad
