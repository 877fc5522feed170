#pragma once

// Tape-based reverse-mode differentiation over dense tensors.
//
// A Graph records every operation in execution order. Each node stores its
// forward value, a lazily allocated gradient buffer, and a closure that
// pushes its gradient to its parents. backward() walks the tape in reverse
// recording order, visiting each node once. Parameters enter the tape as
// leaves; after the walk their node gradients are added into
// Parameter::grad.
//
// A Graph is confined to one thread. Build a fresh one per step.

#include <deque>
#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "pen/tensor.hpp"

namespace pen {

template <typename T>
class Graph;

template <typename T>
class Var {
public:
    Var() = default;
    Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

    const Tensor<T>& value() const;
    const Shape& shape() const { return value().shape; }
    Graph<T>& graph() const { return *graph_; }
    std::size_t id() const { return id_; }
    bool valid() const { return graph_ != nullptr; }

private:
    Graph<T>* graph_ = nullptr;
    std::size_t id_ = 0;
};

template <typename T>
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var<T> constant(Tensor<T> value);
    // Binds a parameter as a leaf. Repeated calls return the same node.
    Var<T> parameter(Parameter<T>& p);

    // Seeds d(loss)/d(loss) = 1 and propagates to every leaf.
    void backward(const Var<T>& loss);

    // Op-implementer surface.
    Var<T> record(Tensor<T> value, std::vector<std::size_t> parents, BackwardFn fn);
    const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
    // Gradient buffer of a node; zero-filled on first access.
    Tensor<T>& grad(std::size_t id);
    bool has_grad(std::size_t id) const { return nodes_[id].grad_ready; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool grad_ready = false;
        bool requires_grad = false;
        std::vector<std::size_t> parents;
        BackwardFn backward;
        Parameter<T>* param = nullptr;
    };

    std::deque<Node> nodes_;  // deque keeps value() references valid as the tape grows
    std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
    bool backward_done_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const
{
    return graph_->value(id_);
}

// ---------------------------------------------------------------------------
// Operations. Shape mismatches raise ShapeError naming the op and shapes.
// "Row-wise" ops act on the last axis and treat leading axes as a batch.
// ---------------------------------------------------------------------------

/// x[..., k] @ w[k, m] -> [..., m]
template <typename T>
Var<T> matmul(const Var<T>& x, const Var<T>& w);

/// Elementwise sum. b may match a's shape or a's trailing axes (broadcast).
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
/// Elementwise product with the same broadcast rule as add.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T factor);
template <typename T>
Var<T> add_scalar(const Var<T>& a, T offset);

template <typename T>
Var<T> concat_last(std::span<const Var<T>> parts);
template <typename T>
Var<T> concat_last(std::initializer_list<Var<T>> parts)
{
    std::vector<Var<T>> v(parts);
    return concat_last<T>(std::span<const Var<T>>(v));
}

/// Half-open range [begin, end) along one axis.
template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end);
/// Picks one index along an axis and drops that axis.
template <typename T>
Var<T> select(const Var<T>& x, std::size_t axis, std::size_t index);
template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

/// table[R, d] -> rows listed in ids, shape [ids.size(), d]. Embedding lookup.
template <typename T>
Var<T> gather_rows(const Var<T>& table, std::span<const std::size_t> ids);
/// Inverse placement: src[K, d] rows land at rows[k] of a zero [total_rows, d].
template <typename T>
Var<T> scatter_rows(const Var<T>& src, std::span<const std::size_t> rows, std::size_t total_rows);

template <typename T>
Var<T> sigmoid(const Var<T>& x);
template <typename T>
Var<T> tanh(const Var<T>& x);
template <typename T>
Var<T> exp(const Var<T>& x);
template <typename T>
Var<T> log(const Var<T>& x);
template <typename T>
Var<T> softmax(const Var<T>& x);
template <typename T>
Var<T> log_softmax(const Var<T>& x);

/// Sum of all elements -> scalar.
template <typename T>
Var<T> sum(const Var<T>& x);
/// Mean of all elements -> scalar.
template <typename T>
Var<T> mean(const Var<T>& x);
/// Sum over the last axis, which is dropped.
template <typename T>
Var<T> sum_last(const Var<T>& x);

inline constexpr double kCosineEps = 1e-6;

/// Row-wise a.b / max(|a||b|, eps); the last axis is reduced.
template <typename T>
Var<T> cosine_similarity(const Var<T>& a, const Var<T>& b);

/// Identity forward, no gradient to the input.
template <typename T>
Var<T> detach(const Var<T>& x);

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

/// Single-layer LSTM weights. Gate blocks along the 4h axis: input, forget,
/// cell candidate, output.
template <typename T>
struct LstmParams {
    Parameter<T>* w_input = nullptr;   // [d_in, 4h]
    Parameter<T>* w_hidden = nullptr;  // [h, 4h]
    Parameter<T>* bias = nullptr;      // [4h]

    std::size_t input_dim() const { return w_input->value.dim(0); }
    std::size_t hidden_dim() const { return w_hidden->value.dim(0); }
};

/// Runs the recurrence over x[B, T, d_in] from a zero state, sample b
/// consuming its first lengths[b] steps. Returns h at step lengths[b] - 1
/// as [B, h]; a zero-length sample yields the zero vector.
template <typename T>
Var<T> lstm_last(const Var<T>& x, const LstmParams<T>& params, std::span<const std::size_t> lengths);

/// Full hidden sequence [B, T, h]. Sample b runs over its first lengths[b]
/// steps (reversed when `reverse`); later steps are zero.
template <typename T>
Var<T> lstm_sequence(const Var<T>& x, const LstmParams<T>& params,
                     std::span<const std::size_t> lengths, bool reverse);

}  // namespace pen
