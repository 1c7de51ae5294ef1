// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0

#include "ceqe/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "ceqe/errors.hpp"

namespace ceqe::ad {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

std::vector<double>& Node::ensure_grad() {
    if (grad.size() != values.size()) {
        grad.assign(values.size(), 0.0);
    }
    return grad;
}

namespace {

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> values, bool trainable) {
    if (shape_size(shape) != values.size()) {
        fail(ErrorKind::Dimension, "leaf shape " + shape_str(shape) + " does not match " +
                                       std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = trainable;
    return node;
}

} // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
    return Tensor(make_leaf(std::move(shape), std::move(values), false));
}

Tensor Tensor::zeros(Shape shape) {
    std::size_t n = shape_size(shape);
    return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::variable(Shape shape, std::vector<double> values) {
    return Tensor(make_leaf(std::move(shape), std::move(values), true));
}

Tensor Tensor::from_op(const char* op, Shape shape, std::vector<double> values,
                       std::vector<Tensor> inputs, std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->is_leaf = false;
    node->op = op;
    for (const Tensor& in : inputs) {
        node->requires_grad = node->requires_grad || in.requires_grad();
    }
    if (node->requires_grad) {
        node->inputs.reserve(inputs.size());
        for (Tensor& in : inputs) {
            node->inputs.push_back(std::move(in.node_));
        }
        node->backward_fn = std::move(backward);
    }
    return Tensor(std::move(node));
}

void Tensor::zero_grad() {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (size() != 1) {
        fail(ErrorKind::Contract, "item() on tensor of shape " + shape_str(shape()));
    }
    return node_->values[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    return node_->values.at(row * node_->shape.at(1) + col);
}

Parameter::Parameter(std::string name_, Shape shape)
    : name(std::move(name_)),
      tensor(Tensor::variable(shape, std::vector<double>(shape_size(shape), 0.0))),
      adam_m(shape_size(shape), 0.0),
      adam_v(shape_size(shape), 0.0) {}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        fail(ErrorKind::Contract, "backward() needs a scalar loss, got shape " +
                                      (loss.defined() ? shape_str(loss.shape()) : "<undefined>"));
    }
    if (!loss.requires_grad()) {
        return;
    }

    // Iterative post-order DFS; the result lists inputs before their consumers.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
    seen.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* node : order) {
        if (!node->is_leaf) {
            node->grad.assign(node->values.size(), 0.0);
        }
    }
    loss.node()->ensure_grad()[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (!node->is_leaf && node->backward_fn) {
            node->backward_fn(*node);
        }
    }
}

} // namespace ceqe::ad
