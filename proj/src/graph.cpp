#include "gbrs/graph.hpp"

#include "gbrs/errors.hpp"

#include <cassert>

namespace gbrs {

const Tensor& Var::value() const { return graph_->value(id_); }

const Tensor& Var::grad() const { return graph_->grad(id_); }

bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Var Graph::constant(Tensor value) {
    Node node;
    node.op = "constant";
    node.value = std::move(value);
    node.leaf = true;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Tensor value) {
    Node node;
    node.op = "parameter";
    node.value = std::move(value);
    node.leaf = true;
    node.requires_grad = true;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string_view op, std::vector<std::size_t> inputs, Tensor value,
                  BackwardFn fn) {
#ifndef NDEBUG
    bool finite_inputs = true;
    for (auto id : inputs) finite_inputs = finite_inputs && nodes_[id].value.all_finite();
    assert(!finite_inputs || value.all_finite());
#endif
    Node node;
    node.op = op;
    for (auto id : inputs) {
        assert(id < nodes_.size());
        node.requires_grad = node.requires_grad || nodes_[id].requires_grad;
    }
    node.inputs = std::move(inputs);
    node.value = std::move(value);
    if (node.requires_grad) node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::grad(std::size_t id) { return grad_buffer(id); }

Tensor& Graph::grad_buffer(std::size_t id) {
    Node& node = nodes_[id];
    if (node.grad.numel() != node.value.numel()) node.grad = Tensor(node.value.shape());
    return node.grad;
}

void Graph::backward(Var root) {
    if (root.graph_ != this) throw ContractError("backward: root belongs to another graph");
    if (nodes_[root.id_].value.numel() != 1) {
        throw ContractError("backward: root must be a scalar, got shape " +
                            shape_to_string(nodes_[root.id_].value.shape()));
    }
    for (auto& node : nodes_) {
        if (!node.leaf) node.grad = Tensor();
    }
    if (!nodes_[root.id_].requires_grad) return;
    grad_buffer(root.id_)[0] += 1.0;
    for (std::size_t id = root.id_ + 1; id-- > 0;) {
        Node& node = nodes_[id];
        if (!node.requires_grad || node.leaf || !node.backward) continue;
        if (node.grad.numel() == 0) continue; // not reachable from root
        node.backward(*this, id);
    }
}

void Graph::zero_grad() {
    for (auto& node : nodes_) node.grad = Tensor();
}

} // namespace gbrs
