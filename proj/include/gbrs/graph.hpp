#pragma once

#include "gbrs/tensor.hpp"

#include <cstddef>
#include <functional>
#include <limits>
#include <string_view>
#include <vector>

namespace gbrs {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while its Graph lives.
class Var {
  public:
    Var() = default;

    bool valid() const { return graph_ != nullptr; }
    Graph* graph() const { return graph_; }
    std::size_t id() const { return id_; }

    const Tensor& value() const;
    /// Gradient accumulated by the last backward pass. Zero-filled if none reached this node.
    const Tensor& grad() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;

  private:
    friend class Graph;
    Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

    Graph* graph_ = nullptr;
    std::size_t id_ = std::numeric_limits<std::size_t>::max();
};

/// Append-only reverse-mode tape. Nodes only reference earlier ids, so the
/// graph is acyclic by construction and backward walks ids in reverse.
///
/// Leaf gradients accumulate across backward() calls until zero_grad();
/// interior gradients are reset at the start of every backward().
class Graph {
  public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    Var parameter(Tensor value);

    /// Records an interior node. `fn` may be empty if no input requires grad.
    Var record(std::string_view op, std::vector<std::size_t> inputs, Tensor value, BackwardFn fn);

    void backward(Var root);
    void zero_grad();

    std::size_t size() const { return nodes_.size(); }

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    const Tensor& grad(std::size_t id);
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::string_view op_name(std::size_t id) const { return nodes_[id].op; }
    const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

    /// Mutable gradient buffer of node `id`, allocated zero-filled on first use.
    Tensor& grad_buffer(std::size_t id);

    Var var(std::size_t id) { return Var(this, id); }

  private:
    struct Node {
        std::string_view op;
        std::vector<std::size_t> inputs;
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool leaf = false;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
};

} // namespace gbrs
