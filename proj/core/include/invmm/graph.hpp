#pragma once

#include <memory>
#include <unordered_map>
#include <vector>

#include "invmm/tensor.hpp"

namespace invmm {

namespace detail {
struct Node;
}

/// Handle to a node of an autodiff computation graph. Values are computed
/// eagerly; the graph only records structure needed for a later backward
/// pass. Graphs are acyclic by construction and confined to one logical
/// thread; nodes whose result needs no gradient drop their input links so
/// no-grad evaluation does not grow a graph.
class Var {
public:
    Var() = default;

    /// Leaf holding a value; `trainable` marks it as a gradient target.
    static Var leaf(Tensor value, bool trainable);
    static Var constant(Tensor value);
    static Var scalar(double v) { return constant(Tensor::scalar(v)); }

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const;
    bool requires_grad() const;

    /// Replace a leaf's payload (optimizer update path). Non-leaf -> error.
    void set_value(Tensor value);

    const detail::Node* node() const { return node_.get(); }

private:
    friend class GraphOps;
    explicit Var(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;
};

/// Result of a backward pass: leaf/intermediate gradients keyed by node.
/// Trainable leaves that do not participate in the root get a zero gradient
/// from get() — mathematically d(root)/d(leaf) = 0.
class GradientMap {
public:
    bool contains(const Var& v) const { return grads_.count(v.node()) != 0; }
    /// Gradient of the backward root w.r.t. `v` (zeros if v never reached).
    Tensor get(const Var& v) const;

    std::unordered_map<const detail::Node*, Tensor>& raw() { return grads_; }

private:
    std::unordered_map<const detail::Node*, Tensor> grads_;
    friend GradientMap backward(const Var&);
};

/// Reverse-mode differentiation from a scalar root. Each call computes a
/// fresh gradient map; nothing accumulates across calls, so "reset" is
/// implicit and double-counting between optimizer steps is impossible.
GradientMap backward(const Var& root);

/// While alive, newly built ops on this thread record no graph structure.
class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    bool previous_;
};

// Differentiable ops. Elementwise ops take equal shapes or a scalar on
// either side; matmul takes rank-2 operands with matching inner extents.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);
Var exp(const Var& x);
Var log(const Var& x); // domain error on nonpositive entries
Var square(const Var& x);
Var sum(const Var& x);  // -> scalar
Var mean(const Var& x); // -> scalar
Var silu(const Var& x);
Var tanh(const Var& x);
/// Row-wise softmax of a rank-2 tensor, max-stabilized.
Var softmax_rows(const Var& x);
/// Stack two rank-2 tensors with equal column counts.
Var concat_rows(const Var& a, const Var& b);
/// Concatenate two rank-2 tensors with equal row counts along columns.
Var concat_cols(const Var& a, const Var& b);
/// Repeat a row vector (rank-1 or 1xD) into `count` rows; the gradient is
/// the column sum. This is the explicit replacement for row broadcast.
Var tile_rows(const Var& v, std::size_t count);
/// Same data, new shape (sizes must match); gradient reshapes back.
Var reshape(const Var& x, std::vector<std::size_t> shape);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }

inline Var operator*(const Var& a, double s) { return mul(a, Var::scalar(s)); }
inline Var operator*(double s, const Var& a) { return mul(a, Var::scalar(s)); }
inline Var operator+(const Var& a, double s) { return add(a, Var::scalar(s)); }
inline Var operator-(const Var& a, double s) { return sub(a, Var::scalar(s)); }

} // namespace invmm
