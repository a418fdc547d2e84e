#include "invmm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "invmm/errors.hpp"

namespace invmm {

namespace detail {

enum class Op {
    leaf,
    add,
    sub,
    mul,
    div,
    matmul,
    exp_,
    log_,
    square,
    sum,
    mean,
    silu,
    tanh_,
    softmax_rows,
    concat_rows,
    concat_cols,
    tile_rows,
    reshape,
};

struct Node {
    Op op = Op::leaf;
    std::vector<std::shared_ptr<Node>> inputs;
    Tensor value;
    bool requires_grad = false;
};

} // namespace detail

using detail::Node;
using detail::Op;

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<Node> make_node(Op op, Tensor value, std::vector<std::shared_ptr<Node>> inputs) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value = std::move(value);
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& in : inputs) {
            if (in->requires_grad) {
                needs = true;
                break;
            }
        }
    }
    if (needs) {
        n->requires_grad = true;
        n->inputs = std::move(inputs);
    }
    return n;
}

const Tensor& in_val(const Node* n, std::size_t i) { return n->inputs[i]->value; }

} // namespace

NoGradScope::NoGradScope() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradScope::~NoGradScope() { g_grad_enabled = previous_; }

Var Var::leaf(Tensor value, bool trainable) {
    auto n = std::make_shared<Node>();
    n->op = Op::leaf;
    n->value = std::move(value);
    n->requires_grad = trainable;
    return Var(n);
}

Var Var::constant(Tensor value) { return leaf(std::move(value), false); }

const Tensor& Var::value() const {
    if (!node_) throw ContractError("value() on empty Var");
    return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

void Var::set_value(Tensor value) {
    if (!node_ || node_->op != Op::leaf) {
        throw ContractError("set_value is only valid on leaf variables");
    }
    if (!node_->value.same_shape(value)) {
        throw ContractError("set_value shape changed from " + node_->value.shape_str() + " to " +
                            value.shape_str());
    }
    node_->value = std::move(value);
}

// ---------------------------------------------------------------------------
// Forward ops

#define INVMM_REQUIRE_DEFINED(v, name)                                 \
    do {                                                               \
        if (!(v).defined()) throw ContractError(name ": empty Var");   \
    } while (0)

// Var's private constructor is reachable via friend GraphOps.
class GraphOps {
public:
    static Var make(Op op, Tensor value, std::vector<std::shared_ptr<Node>> inputs) {
        return Var(make_node(op, std::move(value), std::move(inputs)));
    }
    static std::shared_ptr<Node> share(const Var& v) { return v.node_; }
};

Var add(const Var& a, const Var& b) {
    INVMM_REQUIRE_DEFINED(a, "add");
    INVMM_REQUIRE_DEFINED(b, "add");
    return GraphOps::make(Op::add, add(a.value(), b.value()), {GraphOps::share(a), GraphOps::share(b)});
}

Var sub(const Var& a, const Var& b) {
    INVMM_REQUIRE_DEFINED(a, "sub");
    INVMM_REQUIRE_DEFINED(b, "sub");
    return GraphOps::make(Op::sub, sub(a.value(), b.value()), {GraphOps::share(a), GraphOps::share(b)});
}

Var mul(const Var& a, const Var& b) {
    INVMM_REQUIRE_DEFINED(a, "mul");
    INVMM_REQUIRE_DEFINED(b, "mul");
    return GraphOps::make(Op::mul, mul(a.value(), b.value()), {GraphOps::share(a), GraphOps::share(b)});
}

Var div(const Var& a, const Var& b) {
    INVMM_REQUIRE_DEFINED(a, "div");
    INVMM_REQUIRE_DEFINED(b, "div");
    return GraphOps::make(Op::div, div(a.value(), b.value()), {GraphOps::share(a), GraphOps::share(b)});
}

Var matmul(const Var& a, const Var& b) {
    INVMM_REQUIRE_DEFINED(a, "matmul");
    INVMM_REQUIRE_DEFINED(b, "matmul");
    return GraphOps::make(Op::matmul, matmul(a.value(), b.value()),
                          {GraphOps::share(a), GraphOps::share(b)});
}

Var exp(const Var& x) {
    INVMM_REQUIRE_DEFINED(x, "exp");
    Tensor out(x.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.value()[i]);
    return GraphOps::make(Op::exp_, std::move(out), {GraphOps::share(x)});
}

Var log(const Var& x) {
    INVMM_REQUIRE_DEFINED(x, "log");
    Tensor out(x.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x.value()[i];
        if (v <= 0.0) throw MathDomainError("log of nonpositive value");
        out[i] = std::log(v);
    }
    return GraphOps::make(Op::log_, std::move(out), {GraphOps::share(x)});
}

Var square(const Var& x) {
    INVMM_REQUIRE_DEFINED(x, "square");
    Tensor out(x.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * x.value()[i];
    return GraphOps::make(Op::square, std::move(out), {GraphOps::share(x)});
}

Var sum(const Var& x) {
    INVMM_REQUIRE_DEFINED(x, "sum");
    return GraphOps::make(Op::sum, Tensor::scalar(sum_all(x.value())), {GraphOps::share(x)});
}

Var mean(const Var& x) {
    INVMM_REQUIRE_DEFINED(x, "mean");
    if (x.value().size() == 0) throw ContractError("mean of empty tensor");
    return GraphOps::make(Op::mean,
                          Tensor::scalar(sum_all(x.value()) / static_cast<double>(x.value().size())),
                          {GraphOps::share(x)});
}

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

} // namespace

Var silu(const Var& x) {
    INVMM_REQUIRE_DEFINED(x, "silu");
    Tensor out(x.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x.value()[i];
        out[i] = v * sigmoid(v);
    }
    return GraphOps::make(Op::silu, std::move(out), {GraphOps::share(x)});
}

Var tanh(const Var& x) {
    INVMM_REQUIRE_DEFINED(x, "tanh");
    Tensor out(x.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.value()[i]);
    return GraphOps::make(Op::tanh_, std::move(out), {GraphOps::share(x)});
}

Var softmax_rows(const Var& x) {
    INVMM_REQUIRE_DEFINED(x, "softmax_rows");
    const Tensor& v = x.value();
    if (v.rank() != 2) throw ContractError("softmax_rows needs a rank-2 tensor, got " + v.shape_str());
    const std::size_t r = v.extent(0), c = v.extent(1);
    Tensor out({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        double mx = v[i * c];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, v[i * c + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double e = std::exp(v[i * c + j] - mx);
            out[i * c + j] = e;
            z += e;
        }
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
    }
    return GraphOps::make(Op::softmax_rows, std::move(out), {GraphOps::share(x)});
}

Var concat_rows(const Var& a, const Var& b) {
    INVMM_REQUIRE_DEFINED(a, "concat_rows");
    INVMM_REQUIRE_DEFINED(b, "concat_rows");
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    if (ta.rank() != 2 || tb.rank() != 2 || ta.extent(1) != tb.extent(1)) {
        throw ContractError("concat_rows needs rank-2 operands with equal column counts: " +
                            ta.shape_str() + " vs " + tb.shape_str());
    }
    Tensor out({ta.extent(0) + tb.extent(0), ta.extent(1)});
    std::copy(ta.data(), ta.data() + ta.size(), out.data());
    std::copy(tb.data(), tb.data() + tb.size(), out.data() + ta.size());
    return GraphOps::make(Op::concat_rows, std::move(out), {GraphOps::share(a), GraphOps::share(b)});
}

Var concat_cols(const Var& a, const Var& b) {
    INVMM_REQUIRE_DEFINED(a, "concat_cols");
    INVMM_REQUIRE_DEFINED(b, "concat_cols");
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    if (ta.rank() != 2 || tb.rank() != 2 || ta.extent(0) != tb.extent(0)) {
        throw ContractError("concat_cols needs rank-2 operands with equal row counts: " +
                            ta.shape_str() + " vs " + tb.shape_str());
    }
    const std::size_t r = ta.extent(0), ca = ta.extent(1), cb = tb.extent(1);
    Tensor out({r, ca + cb});
    for (std::size_t i = 0; i < r; ++i) {
        std::copy(ta.data() + i * ca, ta.data() + (i + 1) * ca, out.data() + i * (ca + cb));
        std::copy(tb.data() + i * cb, tb.data() + (i + 1) * cb, out.data() + i * (ca + cb) + ca);
    }
    return GraphOps::make(Op::concat_cols, std::move(out), {GraphOps::share(a), GraphOps::share(b)});
}

Var tile_rows(const Var& v, std::size_t count) {
    INVMM_REQUIRE_DEFINED(v, "tile_rows");
    const Tensor& t = v.value();
    if (count == 0) throw ContractError("tile_rows count must be positive");
    std::size_t d;
    if (t.rank() == 1) {
        d = t.extent(0);
    } else if (t.rank() == 2 && t.extent(0) == 1) {
        d = t.extent(1);
    } else {
        throw ContractError("tile_rows needs a row vector, got " + t.shape_str());
    }
    Tensor out({count, d});
    for (std::size_t i = 0; i < count; ++i) {
        std::copy(t.data(), t.data() + d, out.data() + i * d);
    }
    return GraphOps::make(Op::tile_rows, std::move(out), {GraphOps::share(v)});
}

Var reshape(const Var& x, std::vector<std::size_t> shape) {
    INVMM_REQUIRE_DEFINED(x, "reshape");
    Tensor out(std::move(shape), std::vector<double>(x.value().data(), x.value().data() + x.value().size()));
    return GraphOps::make(Op::reshape, std::move(out), {GraphOps::share(x)});
}

// ---------------------------------------------------------------------------
// Backward

namespace {

// Accumulate `g` into the gradient slot of `target`, reducing over a scalar
// broadcast if the forward op broadcast `target` against a larger operand.
void accumulate(std::unordered_map<const Node*, Tensor>& grads, const Node* target, const Tensor& g) {
    if (!target->requires_grad) return;
    auto it = grads.find(target);
    if (it == grads.end()) {
        it = grads.emplace(target, Tensor::zeros(target->value.shape())).first;
    }
    Tensor& slot = it->second;
    if (slot.size() == g.size()) {
        for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
    } else if (slot.size() == 1) {
        slot[0] += sum_all(g);
    } else {
        throw ContractError("gradient shape mismatch in accumulate");
    }
}

void backward_into(const Node* n, const Tensor& g, std::unordered_map<const Node*, Tensor>& grads) {
    switch (n->op) {
        case Op::leaf:
            break;
        case Op::add: {
            accumulate(grads, n->inputs[0].get(), g);
            accumulate(grads, n->inputs[1].get(), g);
            break;
        }
        case Op::sub: {
            accumulate(grads, n->inputs[0].get(), g);
            accumulate(grads, n->inputs[1].get(), scale(g, -1.0));
            break;
        }
        case Op::mul: {
            accumulate(grads, n->inputs[0].get(), mul(g, in_val(n, 1)));
            accumulate(grads, n->inputs[1].get(), mul(g, in_val(n, 0)));
            break;
        }
        case Op::div: {
            const Tensor& a = in_val(n, 0);
            const Tensor& b = in_val(n, 1);
            accumulate(grads, n->inputs[0].get(), div(g, b));
            // d/db (a/b) = -a / b^2
            accumulate(grads, n->inputs[1].get(), scale(div(mul(g, a), mul(b, b)), -1.0));
            break;
        }
        case Op::matmul: {
            const Tensor& a = in_val(n, 0);
            const Tensor& b = in_val(n, 1);
            if (n->inputs[0]->requires_grad) accumulate(grads, n->inputs[0].get(), matmul_nt(g, b));
            if (n->inputs[1]->requires_grad) accumulate(grads, n->inputs[1].get(), matmul_tn(a, g));
            break;
        }
        case Op::exp_: {
            accumulate(grads, n->inputs[0].get(), mul(g, n->value));
            break;
        }
        case Op::log_: {
            accumulate(grads, n->inputs[0].get(), div(g, in_val(n, 0)));
            break;
        }
        case Op::square: {
            accumulate(grads, n->inputs[0].get(), scale(mul(g, in_val(n, 0)), 2.0));
            break;
        }
        case Op::sum: {
            const Tensor& x = in_val(n, 0);
            accumulate(grads, n->inputs[0].get(), Tensor::full(x.shape(), g[0]));
            break;
        }
        case Op::mean: {
            const Tensor& x = in_val(n, 0);
            accumulate(grads, n->inputs[0].get(),
                       Tensor::full(x.shape(), g[0] / static_cast<double>(x.size())));
            break;
        }
        case Op::silu: {
            const Tensor& x = in_val(n, 0);
            Tensor d(x.shape());
            for (std::size_t i = 0; i < d.size(); ++i) {
                const double s = sigmoid(x[i]);
                d[i] = g[i] * (s + x[i] * s * (1.0 - s));
            }
            accumulate(grads, n->inputs[0].get(), d);
            break;
        }
        case Op::tanh_: {
            Tensor d(n->value.shape());
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] = g[i] * (1.0 - n->value[i] * n->value[i]);
            }
            accumulate(grads, n->inputs[0].get(), d);
            break;
        }
        case Op::softmax_rows: {
            const Tensor& s = n->value;
            const std::size_t r = s.extent(0), c = s.extent(1);
            Tensor d({r, c});
            for (std::size_t i = 0; i < r; ++i) {
                double inner = 0.0;
                for (std::size_t j = 0; j < c; ++j) inner += g[i * c + j] * s[i * c + j];
                for (std::size_t j = 0; j < c; ++j) {
                    d[i * c + j] = s[i * c + j] * (g[i * c + j] - inner);
                }
            }
            accumulate(grads, n->inputs[0].get(), d);
            break;
        }
        case Op::concat_rows: {
            const Tensor& a = in_val(n, 0);
            const Tensor& b = in_val(n, 1);
            Tensor ga(a.shape());
            Tensor gb(b.shape());
            std::copy(g.data(), g.data() + a.size(), ga.data());
            std::copy(g.data() + a.size(), g.data() + a.size() + b.size(), gb.data());
            accumulate(grads, n->inputs[0].get(), ga);
            accumulate(grads, n->inputs[1].get(), gb);
            break;
        }
        case Op::concat_cols: {
            const Tensor& a = in_val(n, 0);
            const Tensor& b = in_val(n, 1);
            const std::size_t r = a.extent(0), ca = a.extent(1), cb = b.extent(1);
            Tensor ga(a.shape());
            Tensor gb(b.shape());
            for (std::size_t i = 0; i < r; ++i) {
                std::copy(g.data() + i * (ca + cb), g.data() + i * (ca + cb) + ca, ga.data() + i * ca);
                std::copy(g.data() + i * (ca + cb) + ca, g.data() + (i + 1) * (ca + cb),
                          gb.data() + i * cb);
            }
            accumulate(grads, n->inputs[0].get(), ga);
            accumulate(grads, n->inputs[1].get(), gb);
            break;
        }
        case Op::tile_rows: {
            const Tensor& v = in_val(n, 0);
            const std::size_t rows = n->value.extent(0), d = n->value.extent(1);
            Tensor gv(v.shape());
            for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t j = 0; j < d; ++j) gv[j] += g[i * d + j];
            }
            accumulate(grads, n->inputs[0].get(), gv);
            break;
        }
        case Op::reshape: {
            const Tensor& x = in_val(n, 0);
            Tensor gx(x.shape(), std::vector<double>(g.data(), g.data() + g.size()));
            accumulate(grads, n->inputs[0].get(), gx);
            break;
        }
    }
}

} // namespace

Tensor GradientMap::get(const Var& v) const {
    auto it = grads_.find(v.node());
    if (it != grads_.end()) return it->second;
    return Tensor::zeros(v.value().shape());
}

GradientMap backward(const Var& root) {
    if (!root.defined()) throw ContractError("backward: empty Var");
    if (!root.value().is_scalar()) {
        throw ContractError("backward root must be scalar, got shape " + root.value().shape_str());
    }
    GradientMap result;
    if (!root.requires_grad()) return result;

    // Iterative post-order over the grad-requiring subgraph.
    std::vector<const Node*> topo;
    std::unordered_set<const Node*> visited;
    struct Frame {
        const Node* node;
        std::size_t next_input;
    };
    std::vector<Frame> stack;
    stack.push_back({root.node(), 0});
    visited.insert(root.node());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_input < f.node->inputs.size()) {
            const Node* in = f.node->inputs[f.next_input++].get();
            if (in->requires_grad && !visited.count(in)) {
                visited.insert(in);
                stack.push_back({in, 0});
            }
        } else {
            topo.push_back(f.node);
            stack.pop_back();
        }
    }

    auto& grads = result.raw();
    grads.emplace(root.node(), Tensor::scalar(1.0));
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        const Node* n = *it;
        auto git = grads.find(n);
        if (git == grads.end()) continue;
        backward_into(n, git->second, grads);
    }
    return result;
}

} // namespace invmm
