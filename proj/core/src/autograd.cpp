#include "pen/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

#include <Eigen/Dense>

namespace pen {

std::size_t numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape)
{
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out += ", ";
        }
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

[[noreturn]] void shape_fail(const std::string& op, const Shape& a, const Shape& b)
{
    throw ShapeError(op + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

[[noreturn]] void shape_fail(const std::string& op, const Shape& a)
{
    throw ShapeError(op + ": invalid shape " + to_string(a));
}

template <typename T>
Graph<T>& same_graph(const std::string& op, const Var<T>& a, const Var<T>& b)
{
    if (&a.graph() != &b.graph()) {
        throw Error(op + ": operands belong to different graphs");
    }
    return a.graph();
}

// True when `small` equals `big` or a trailing suffix of it.
bool broadcasts(const Shape& big, const Shape& small)
{
    if (small.size() > big.size()) {
        return false;
    }
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <typename T>
Var<T> unary(const Var<T>& x, T (*f)(T), T (*df)(T x, T y))
{
    Graph<T>& g = x.graph();
    Tensor<T> out(x.shape());
    const auto& xv = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = f(xv[i]);
    }
    const std::size_t xid = x.id();
    return g.record(std::move(out), {xid}, [xid, df](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.grad(self);
        const auto& xv2 = gr.value(xid);
        const auto& yv = gr.value(self);
        auto& gx = gr.grad(xid);
        for (std::size_t i = 0; i < go.size(); ++i) {
            gx[i] += go[i] * df(xv2[i], yv[i]);
        }
    });
}

}  // namespace

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value)
{
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::parameter(Parameter<T>& p)
{
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
        return Var<T>(this, it->second);
    }
    Node n;
    n.value = p.value;
    n.requires_grad = true;
    n.param = &p;
    nodes_.push_back(std::move(n));
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::record(Tensor<T> value, std::vector<std::size_t> parents, BackwardFn fn)
{
    Node n;
    n.value = std::move(value);
    n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                  [this](std::size_t p) { return nodes_[p].requires_grad; });
    if (n.requires_grad) {
        n.parents = std::move(parents);
        n.backward = std::move(fn);
    }
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Tensor<T>& Graph<T>::grad(std::size_t id)
{
    Node& n = nodes_[id];
    if (!n.grad_ready) {
        n.grad = Tensor<T>(n.value.shape, T{0});
        n.grad_ready = true;
    }
    return n.grad;
}

template <typename T>
void Graph<T>::backward(const Var<T>& loss)
{
    if (&loss.graph() != this) {
        throw Error("backward: loss belongs to a different graph");
    }
    if (loss.value().size() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + to_string(loss.shape()));
    }
    if (backward_done_) {
        throw Error("backward: graph already differentiated");
    }
    backward_done_ = true;
    grad(loss.id())[0] = T{1};
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.requires_grad || !n.grad_ready) {
            continue;
        }
        if (n.backward) {
            n.backward(*this, id);
        }
        if (n.param != nullptr) {
            auto& pg = n.param->grad.data;
            for (std::size_t i = 0; i < pg.size(); ++i) {
                pg[i] += n.grad[i];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& x, const Var<T>& w)
{
    Graph<T>& g = same_graph("matmul", x, w);
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (ws.size() != 2 || xs.empty() || xs.back() != ws[0]) {
        shape_fail("matmul", xs, ws);
    }
    const std::size_t rows = x.value().rows();
    const std::size_t k = ws[0];
    const std::size_t m = ws[1];
    Shape out_shape = xs;
    out_shape.back() = m;
    Tensor<T> out(out_shape);
    MapR<T>(out.data.data(), rows, m).noalias() =
        CMapR<T>(x.value().data.data(), rows, k) * CMapR<T>(w.value().data.data(), k, m);
    const std::size_t xid = x.id();
    const std::size_t wid = w.id();
    return g.record(std::move(out), {xid, wid}, [xid, wid, rows, k, m](Graph<T>& gr, std::size_t self) {
        CMapR<T> go(gr.grad(self).data.data(), rows, m);
        if (gr.requires_grad(xid)) {
            MapR<T>(gr.grad(xid).data.data(), rows, k).noalias() +=
                go * CMapR<T>(gr.value(wid).data.data(), k, m).transpose();
        }
        if (gr.requires_grad(wid)) {
            MapR<T>(gr.grad(wid).data.data(), k, m).noalias() +=
                CMapR<T>(gr.value(xid).data.data(), rows, k).transpose() * go;
        }
    });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b)
{
    Graph<T>& g = same_graph("add", a, b);
    if (!broadcasts(a.shape(), b.shape())) {
        if (broadcasts(b.shape(), a.shape())) {
            return add(b, a);
        }
        shape_fail("add", a.shape(), b.shape());
    }
    Tensor<T> out = a.value();
    const auto& bv = b.value();
    const std::size_t bn = bv.size();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += bv[i % bn];
    }
    const std::size_t aid = a.id();
    const std::size_t bid = b.id();
    return g.record(std::move(out), {aid, bid}, [aid, bid, bn](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.grad(self);
        if (gr.requires_grad(aid)) {
            auto& ga = gr.grad(aid);
            for (std::size_t i = 0; i < go.size(); ++i) {
                ga[i] += go[i];
            }
        }
        if (gr.requires_grad(bid)) {
            auto& gb = gr.grad(bid);
            for (std::size_t i = 0; i < go.size(); ++i) {
                gb[i % bn] += go[i];
            }
        }
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b)
{
    if (!broadcasts(a.shape(), b.shape())) {
        shape_fail("sub", a.shape(), b.shape());
    }
    return add(a, scale(b, T{-1}));
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b)
{
    Graph<T>& g = same_graph("mul", a, b);
    if (!broadcasts(a.shape(), b.shape())) {
        if (broadcasts(b.shape(), a.shape())) {
            return mul(b, a);
        }
        shape_fail("mul", a.shape(), b.shape());
    }
    Tensor<T> out = a.value();
    const auto& bv = b.value();
    const std::size_t bn = bv.size();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= bv[i % bn];
    }
    const std::size_t aid = a.id();
    const std::size_t bid = b.id();
    return g.record(std::move(out), {aid, bid}, [aid, bid, bn](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.grad(self);
        const auto& av = gr.value(aid);
        const auto& bv2 = gr.value(bid);
        if (gr.requires_grad(aid)) {
            auto& ga = gr.grad(aid);
            for (std::size_t i = 0; i < go.size(); ++i) {
                ga[i] += go[i] * bv2[i % bn];
            }
        }
        if (gr.requires_grad(bid)) {
            auto& gb = gr.grad(bid);
            for (std::size_t i = 0; i < go.size(); ++i) {
                gb[i % bn] += go[i] * av[i];
            }
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor)
{
    Graph<T>& g = a.graph();
    Tensor<T> out = a.value();
    for (auto& v : out.data) {
        v *= factor;
    }
    const std::size_t aid = a.id();
    return g.record(std::move(out), {aid}, [aid, factor](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.grad(self);
        auto& ga = gr.grad(aid);
        for (std::size_t i = 0; i < go.size(); ++i) {
            ga[i] += go[i] * factor;
        }
    });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T offset)
{
    Graph<T>& g = a.graph();
    Tensor<T> out = a.value();
    for (auto& v : out.data) {
        v += offset;
    }
    const std::size_t aid = a.id();
    return g.record(std::move(out), {aid}, [aid](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.grad(self);
        auto& ga = gr.grad(aid);
        for (std::size_t i = 0; i < go.size(); ++i) {
            ga[i] += go[i];
        }
    });
}

// ---------------------------------------------------------------------------
// Layout ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> concat_last(std::span<const Var<T>> parts)
{
    if (parts.empty()) {
        throw ShapeError("concat: no inputs");
    }
    Graph<T>& g = parts[0].graph();
    const Shape& first = parts[0].shape();
    if (first.empty()) {
        shape_fail("concat", first);
    }
    std::vector<std::size_t> widths;
    std::vector<std::size_t> ids;
    std::size_t total = 0;
    for (const auto& p : parts) {
        same_graph("concat", parts[0], p);
        const Shape& s = p.shape();
        if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
            shape_fail("concat", first, s);
        }
        widths.push_back(s.back());
        ids.push_back(p.id());
        total += s.back();
    }
    const std::size_t rows = parts[0].value().rows();
    Shape out_shape = first;
    out_shape.back() = total;
    Tensor<T> out(out_shape);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto& v = parts[p].value();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(v.data.begin() + r * widths[p], widths[p], out.data.begin() + r * total + offset);
        }
        offset += widths[p];
    }
    return g.record(std::move(out), ids, [ids, widths, rows, total](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.grad(self);
        std::size_t off = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
            if (gr.requires_grad(ids[p])) {
                auto& gp = gr.grad(ids[p]);
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < widths[p]; ++c) {
                        gp[r * widths[p] + c] += go[r * total + off + c];
                    }
                }
            }
            off += widths[p];
        }
    });
}

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end)
{
    const Shape& s = x.shape();
    if (axis >= s.size() || begin > end || end > s[axis]) {
        throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") on axis " + std::to_string(axis) + " of shape " + to_string(s));
    }
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) {
        outer *= s[i];
    }
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < s.size(); ++i) {
        inner *= s[i];
    }
    const std::size_t len = s[axis];
    const std::size_t width = end - begin;
    Shape out_shape = s;
    out_shape[axis] = width;
    Tensor<T> out(out_shape);
    const auto& xv = x.value();
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(xv.data.begin() + (o * len + begin) * inner, width * inner,
                    out.data.begin() + o * width * inner);
    }
    const std::size_t xid = x.id();
    return x.graph().record(std::move(out), {xid},
                            [xid, outer, inner, len, begin, width](Graph<T>& gr, std::size_t self) {
                                const auto& go = gr.grad(self);
                                auto& gx = gr.grad(xid);
                                for (std::size_t o = 0; o < outer; ++o) {
                                    const std::size_t src = o * width * inner;
                                    const std::size_t dst = (o * len + begin) * inner;
                                    for (std::size_t i = 0; i < width * inner; ++i) {
                                        gx[dst + i] += go[src + i];
                                    }
                                }
                            });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape)
{
    if (numel(shape) != x.value().size()) {
        shape_fail("reshape", x.shape(), shape);
    }
    Tensor<T> out(std::move(shape), x.value().data);
    const std::size_t xid = x.id();
    return x.graph().record(std::move(out), {xid}, [xid](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.grad(self);
        auto& gx = gr.grad(xid);
        for (std::size_t i = 0; i < go.size(); ++i) {
            gx[i] += go[i];
        }
    });
}

template <typename T>
Var<T> select(const Var<T>& x, std::size_t axis, std::size_t index)
{
    Var<T> s = slice(x, axis, index, index + 1);
    Shape shape = s.shape();
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
    return reshape(s, std::move(shape));
}

template <typename T>
Var<T> gather_rows(const Var<T>& table, std::span<const std::size_t> ids)
{
    const Shape& s = table.shape();
    if (s.size() != 2) {
        shape_fail("gather_rows", s);
    }
    const std::size_t rows = s[0];
    const std::size_t d = s[1];
    Tensor<T> out(Shape{ids.size(), d});
    const auto& tv = table.value();
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (ids[k] >= rows) {
            throw ShapeError("gather_rows: index " + std::to_string(ids[k]) + " out of range for " +
                             to_string(s));
        }
        std::copy_n(tv.data.begin() + ids[k] * d, d, out.data.begin() + k * d);
    }
    const std::size_t tid = table.id();
    std::vector<std::size_t> idx(ids.begin(), ids.end());
    return table.graph().record(std::move(out), {tid}, [tid, idx = std::move(idx), d](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.grad(self);
        auto& gt = gr.grad(tid);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            for (std::size_t c = 0; c < d; ++c) {
                gt[idx[k] * d + c] += go[k * d + c];
            }
        }
    });
}

template <typename T>
Var<T> scatter_rows(const Var<T>& src, std::span<const std::size_t> rows, std::size_t total_rows)
{
    const Shape& s = src.shape();
    if (s.size() != 2 || s[0] != rows.size()) {
        shape_fail("scatter_rows", s);
    }
    const std::size_t d = s[1];
    Tensor<T> out(Shape{total_rows, d});
    const auto& sv = src.value();
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] >= total_rows) {
            throw ShapeError("scatter_rows: row " + std::to_string(rows[k]) + " out of range " +
                             std::to_string(total_rows));
        }
        for (std::size_t c = 0; c < d; ++c) {
            out[rows[k] * d + c] += sv[k * d + c];
        }
    }
    const std::size_t sid = src.id();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return src.graph().record(std::move(out), {sid}, [sid, idx = std::move(idx), d](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.grad(self);
        auto& gs = gr.grad(sid);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            for (std::size_t c = 0; c < d; ++c) {
                gs[k * d + c] += go[idx[k] * d + c];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sigmoid(const Var<T>& x)
{
    return unary<T>(
        x, [](T v) { return T{1} / (T{1} + std::exp(-v)); },
        [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> tanh(const Var<T>& x)
{
    return unary<T>(
        x, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Var<T> exp(const Var<T>& x)
{
    return unary<T>(
        x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(const Var<T>& x)
{
    return unary<T>(
        x, [](T v) { return std::log(v); }, [](T v, T) { return T{1} / v; });
}

template <typename T>
Var<T> softmax(const Var<T>& x)
{
    if (x.shape().empty()) {
        shape_fail("softmax", x.shape());
    }
    const std::size_t rows = x.value().rows();
    const std::size_t cols = x.value().cols();
    Tensor<T> out = x.value();
    for (std::size_t r = 0; r < rows; ++r) {
        T* row = out.data.data() + r * cols;
        const T mx = *std::max_element(row, row + cols);
        T z{0};
        for (std::size_t c = 0; c < cols; ++c) {
            row[c] = std::exp(row[c] - mx);
            z += row[c];
        }
        for (std::size_t c = 0; c < cols; ++c) {
            row[c] /= z;
        }
    }
    const std::size_t xid = x.id();
    return x.graph().record(std::move(out), {xid}, [xid, rows, cols](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.grad(self);
        const auto& y = gr.value(self);
        auto& gx = gr.grad(xid);
        for (std::size_t r = 0; r < rows; ++r) {
            T dot{0};
            for (std::size_t c = 0; c < cols; ++c) {
                dot += go[r * cols + c] * y[r * cols + c];
            }
            for (std::size_t c = 0; c < cols; ++c) {
                gx[r * cols + c] += y[r * cols + c] * (go[r * cols + c] - dot);
            }
        }
    });
}

template <typename T>
Var<T> log_softmax(const Var<T>& x)
{
    if (x.shape().empty()) {
        shape_fail("log_softmax", x.shape());
    }
    const std::size_t rows = x.value().rows();
    const std::size_t cols = x.value().cols();
    Tensor<T> out = x.value();
    for (std::size_t r = 0; r < rows; ++r) {
        T* row = out.data.data() + r * cols;
        const T mx = *std::max_element(row, row + cols);
        T z{0};
        for (std::size_t c = 0; c < cols; ++c) {
            z += std::exp(row[c] - mx);
        }
        const T lse = mx + std::log(z);
        for (std::size_t c = 0; c < cols; ++c) {
            row[c] -= lse;
        }
    }
    const std::size_t xid = x.id();
    return x.graph().record(std::move(out), {xid}, [xid, rows, cols](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.grad(self);
        const auto& y = gr.value(self);
        auto& gx = gr.grad(xid);
        for (std::size_t r = 0; r < rows; ++r) {
            T total{0};
            for (std::size_t c = 0; c < cols; ++c) {
                total += go[r * cols + c];
            }
            for (std::size_t c = 0; c < cols; ++c) {
                gx[r * cols + c] += go[r * cols + c] - std::exp(y[r * cols + c]) * total;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum(const Var<T>& x)
{
    const auto& xv = x.value();
    T total{0};
    for (T v : xv.data) {
        total += v;
    }
    const std::size_t xid = x.id();
    return x.graph().record(Tensor<T>::scalar(total), {xid}, [xid](Graph<T>& gr, std::size_t self) {
        const T go = gr.grad(self)[0];
        for (auto& v : gr.grad(xid).data) {
            v += go;
        }
    });
}

template <typename T>
Var<T> mean(const Var<T>& x)
{
    const auto n = static_cast<T>(x.value().size());
    return scale(sum(x), T{1} / n);
}

template <typename T>
Var<T> sum_last(const Var<T>& x)
{
    const Shape& s = x.shape();
    if (s.empty()) {
        shape_fail("sum_last", s);
    }
    const std::size_t rows = x.value().rows();
    const std::size_t cols = x.value().cols();
    Tensor<T> out(Shape(s.begin(), s.end() - 1));
    const auto& xv = x.value();
    for (std::size_t r = 0; r < rows; ++r) {
        T total{0};
        for (std::size_t c = 0; c < cols; ++c) {
            total += xv[r * cols + c];
        }
        out[r] = total;
    }
    const std::size_t xid = x.id();
    return x.graph().record(std::move(out), {xid}, [xid, rows, cols](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.grad(self);
        auto& gx = gr.grad(xid);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                gx[r * cols + c] += go[r];
            }
        }
    });
}

template <typename T>
Var<T> cosine_similarity(const Var<T>& a, const Var<T>& b)
{
    Graph<T>& g = same_graph("cosine_similarity", a, b);
    if (a.shape() != b.shape() || a.shape().empty()) {
        shape_fail("cosine_similarity", a.shape(), b.shape());
    }
    const std::size_t rows = a.value().rows();
    const std::size_t d = a.value().cols();
    const auto& av = a.value();
    const auto& bv = b.value();
    const Shape& s = a.shape();
    Tensor<T> out(Shape(s.begin(), s.end() - 1));
    // Per row: dot, |a|^2, |b|^2, denominator.
    auto stats = std::make_shared<std::vector<T>>(rows * 4);
    const T eps = static_cast<T>(kCosineEps);
    for (std::size_t r = 0; r < rows; ++r) {
        T dot{0};
        T na2{0};
        T nb2{0};
        for (std::size_t c = 0; c < d; ++c) {
            const T x = av[r * d + c];
            const T y = bv[r * d + c];
            dot += x * y;
            na2 += x * x;
            nb2 += y * y;
        }
        const T den = std::max(std::sqrt(na2) * std::sqrt(nb2), eps);
        out[r] = dot / den;
        (*stats)[4 * r] = dot;
        (*stats)[4 * r + 1] = na2;
        (*stats)[4 * r + 2] = nb2;
        (*stats)[4 * r + 3] = den;
    }
    const std::size_t aid = a.id();
    const std::size_t bid = b.id();
    return g.record(std::move(out), {aid, bid}, [aid, bid, rows, d, eps, stats](Graph<T>& gr, std::size_t self) {
        const auto& go = gr.grad(self);
        const auto& cv = gr.value(self);
        const auto& av2 = gr.value(aid);
        const auto& bv2 = gr.value(bid);
        const bool need_a = gr.requires_grad(aid);
        const bool need_b = gr.requires_grad(bid);
        for (std::size_t r = 0; r < rows; ++r) {
            const T na2 = (*stats)[4 * r + 1];
            const T nb2 = (*stats)[4 * r + 2];
            const T den = (*stats)[4 * r + 3];
            const bool clamped = !(den > eps);
            const T c = cv[r];
            for (std::size_t k = 0; k < d; ++k) {
                const T x = av2[r * d + k];
                const T y = bv2[r * d + k];
                if (need_a) {
                    T da = y / den;
                    if (!clamped) {
                        da -= c * x / na2;
                    }
                    gr.grad(aid)[r * d + k] += go[r] * da;
                }
                if (need_b) {
                    T db = x / den;
                    if (!clamped) {
                        db -= c * y / nb2;
                    }
                    gr.grad(bid)[r * d + k] += go[r] * db;
                }
            }
        }
    });
}

template <typename T>
Var<T> detach(const Var<T>& x)
{
    return x.graph().constant(x.value());
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

namespace {

template <typename T>
struct LstmTape {
    std::size_t batch = 0;
    std::size_t steps = 0;      // padded time axis of the input
    std::size_t max_len = 0;    // recurrence steps actually run
    std::size_t in_dim = 0;
    std::size_t hid = 0;
    bool reverse = false;
    bool sequence_output = false;
    std::vector<std::size_t> lengths;
    // Indexed [step][b][...].
    std::vector<T> gates;    // activated i, f, g, o
    std::vector<T> cell;     // c_t
    std::vector<T> tanh_cell;
    std::vector<T> h_prev;
    std::vector<T> c_prev;

    std::size_t position(std::size_t b, std::size_t s) const
    {
        return reverse ? lengths[b] - 1 - s : s;
    }
};

inline double sigm(double v)
{
    return 1.0 / (1.0 + std::exp(-v));
}

template <typename T>
Var<T> lstm_run(const Var<T>& x, const LstmParams<T>& params, std::span<const std::size_t> lengths,
                bool reverse, bool sequence_output)
{
    const Shape xs = x.shape();  // copied: binding parameters below grows the tape
    if (params.w_input == nullptr || params.w_hidden == nullptr || params.bias == nullptr) {
        throw ShapeError("lstm: missing parameters");
    }
    const Shape& wi = params.w_input->value.shape;
    const Shape& wh = params.w_hidden->value.shape;
    const Shape& bs = params.bias->value.shape;
    if (wi.size() != 2 || wh.size() != 2 || bs.size() != 1 || wi[1] % 4 != 0 || wh[0] * 4 != wi[1] ||
        wh[1] != wi[1] || bs[0] != wi[1]) {
        throw ShapeError("lstm: parameter shapes " + to_string(wi) + ", " + to_string(wh) + ", " +
                         to_string(bs) + " are inconsistent");
    }
    if (xs.size() != 3 || xs[2] != wi[0]) {
        shape_fail("lstm", xs, wi);
    }
    if (lengths.size() != xs[0]) {
        throw ShapeError("lstm: " + std::to_string(lengths.size()) + " lengths for batch " +
                         std::to_string(xs[0]));
    }
    Graph<T>& g = x.graph();
    Var<T> wi_v = g.parameter(*params.w_input);
    Var<T> wh_v = g.parameter(*params.w_hidden);
    Var<T> b_v = g.parameter(*params.bias);

    auto tape = std::make_shared<LstmTape<T>>();
    tape->batch = xs[0];
    tape->steps = xs[1];
    tape->in_dim = xs[2];
    tape->hid = wh[0];
    tape->reverse = reverse;
    tape->sequence_output = sequence_output;
    tape->lengths.assign(lengths.begin(), lengths.end());
    for (std::size_t len : lengths) {
        if (len > tape->steps) {
            throw ShapeError("lstm: real length " + std::to_string(len) + " exceeds " +
                             std::to_string(tape->steps) + " steps");
        }
        tape->max_len = std::max(tape->max_len, len);
    }
    const std::size_t B = tape->batch;
    const std::size_t Tn = tape->steps;
    const std::size_t H = tape->hid;
    const std::size_t G = 4 * H;
    const std::size_t S = tape->max_len;

    // Input projection of the first S steps of every sample: [B*S, 4h].
    MatR<T> xw(B * S, G);
    {
        CMapR<T> wim(params.w_input->value.data.data(), tape->in_dim, G);
        for (std::size_t b = 0; b < B; ++b) {
            xw.middleRows(b * S, S).noalias() =
                CMapR<T>(x.value().data.data() + b * Tn * tape->in_dim, S, tape->in_dim) * wim;
        }
    }
    const auto& bias = params.bias->value.data;

    tape->gates.assign(S * B * G, T{0});
    tape->cell.assign(S * B * H, T{0});
    tape->tanh_cell.assign(S * B * H, T{0});
    tape->h_prev.assign(S * B * H, T{0});
    tape->c_prev.assign(S * B * H, T{0});

    MatR<T> h = MatR<T>::Zero(B, H);
    MatR<T> c = MatR<T>::Zero(B, H);
    MatR<T> z(B, G);
    CMapR<T> whm(params.w_hidden->value.data.data(), H, G);
    Tensor<T> out(sequence_output ? Shape{B, Tn, H} : Shape{B, H});

    for (std::size_t s = 0; s < S; ++s) {
        z.noalias() = h * whm;
        std::copy_n(h.data(), B * H, tape->h_prev.begin() + s * B * H);
        std::copy_n(c.data(), B * H, tape->c_prev.begin() + s * B * H);
        for (std::size_t b = 0; b < B; ++b) {
            if (s >= tape->lengths[b]) {
                continue;
            }
            const std::size_t pos = tape->position(b, s);
            T* gate = tape->gates.data() + (s * B + b) * G;
            for (std::size_t k = 0; k < G; ++k) {
                gate[k] = z(b, k) + xw(b * S + pos, k) + bias[k];
            }
            for (std::size_t k = 0; k < H; ++k) {
                const T ig = static_cast<T>(sigm(gate[k]));
                const T fg = static_cast<T>(sigm(gate[H + k]));
                const T cg = std::tanh(gate[2 * H + k]);
                const T og = static_cast<T>(sigm(gate[3 * H + k]));
                gate[k] = ig;
                gate[H + k] = fg;
                gate[2 * H + k] = cg;
                gate[3 * H + k] = og;
                const T cn = fg * c(b, k) + ig * cg;
                const T tc = std::tanh(cn);
                c(b, k) = cn;
                h(b, k) = og * tc;
                tape->cell[(s * B + b) * H + k] = cn;
                tape->tanh_cell[(s * B + b) * H + k] = tc;
                if (sequence_output) {
                    out[(b * Tn + pos) * H + k] = og * tc;
                }
            }
        }
    }
    if (!sequence_output) {
        std::copy_n(h.data(), B * H, out.data.begin());
    }

    const std::size_t xid = x.id();
    const std::size_t wiid = wi_v.id();
    const std::size_t whid = wh_v.id();
    const std::size_t bid = b_v.id();
    return g.record(std::move(out), {xid, wiid, whid, bid},
                    [tape, xid, wiid, whid, bid](Graph<T>& gr, std::size_t self) {
        const std::size_t B = tape->batch;
        const std::size_t Tn = tape->steps;
        const std::size_t H = tape->hid;
        const std::size_t G = 4 * H;
        const std::size_t D = tape->in_dim;
        const auto& go = gr.grad(self);
        CMapR<T> whm(gr.value(whid).data.data(), H, G);

        MatR<T> dh = MatR<T>::Zero(B, H);
        MatR<T> dc = MatR<T>::Zero(B, H);
        if (!tape->sequence_output) {
            dh = CMapR<T>(go.data.data(), B, H);
        }
        const std::size_t S = tape->max_len;
        MatR<T> dz_all = MatR<T>::Zero(B * S, G);
        MatR<T> dz(B, G);
        MatR<T> dwh = MatR<T>::Zero(H, G);
        MatR<T> dh_prev(B, H);

        for (std::size_t s = tape->max_len; s-- > 0;) {
            dz.setZero();
            for (std::size_t b = 0; b < B; ++b) {
                if (s >= tape->lengths[b]) {
                    continue;
                }
                const std::size_t pos = tape->position(b, s);
                const T* gate = tape->gates.data() + (s * B + b) * G;
                const T* tc = tape->tanh_cell.data() + (s * B + b) * H;
                const T* cp = tape->c_prev.data() + (s * B + b) * H;
                for (std::size_t k = 0; k < H; ++k) {
                    T dhk = dh(b, k);
                    if (tape->sequence_output) {
                        dhk += go[(b * Tn + pos) * H + k];
                    }
                    const T ig = gate[k];
                    const T fg = gate[H + k];
                    const T cg = gate[2 * H + k];
                    const T og = gate[3 * H + k];
                    const T dct = dc(b, k) + dhk * og * (T{1} - tc[k] * tc[k]);
                    dz(b, k) = dct * cg * ig * (T{1} - ig);
                    dz(b, H + k) = dct * cp[k] * fg * (T{1} - fg);
                    dz(b, 2 * H + k) = dct * ig * (T{1} - cg * cg);
                    dz(b, 3 * H + k) = dhk * tc[k] * og * (T{1} - og);
                    dc(b, k) = dct * fg;
                }
                dz_all.row(b * S + pos) = dz.row(b);
            }
            dwh.noalias() += CMapR<T>(tape->h_prev.data() + s * B * H, B, H).transpose() * dz;
            dh_prev.noalias() = dz * whm.transpose();
            for (std::size_t b = 0; b < B; ++b) {
                if (s < tape->lengths[b]) {
                    dh.row(b) = dh_prev.row(b);
                }
            }
        }

        CMapR<T> wim(gr.value(wiid).data.data(), D, G);
        MapR<T> dwi(gr.grad(wiid).data.data(), D, G);
        const bool input_grad = gr.requires_grad(xid);
        for (std::size_t b = 0; b < B; ++b) {
            const auto dzb = dz_all.middleRows(b * S, S);
            dwi.noalias() += CMapR<T>(gr.value(xid).data.data() + b * Tn * D, S, D).transpose() * dzb;
            if (input_grad) {
                MapR<T>(gr.grad(xid).data.data() + b * Tn * D, S, D).noalias() += dzb * wim.transpose();
            }
        }
        MapR<T>(gr.grad(whid).data.data(), H, G) += dwh;
        auto& gb = gr.grad(bid);
        const Eigen::Matrix<T, 1, Eigen::Dynamic> colsum = dz_all.colwise().sum();
        for (std::size_t k = 0; k < G; ++k) {
            gb[k] += colsum(k);
        }
    });
}

}  // namespace

template <typename T>
Var<T> lstm_last(const Var<T>& x, const LstmParams<T>& params, std::span<const std::size_t> lengths)
{
    return lstm_run(x, params, lengths, false, false);
}

template <typename T>
Var<T> lstm_sequence(const Var<T>& x, const LstmParams<T>& params, std::span<const std::size_t> lengths,
                     bool reverse)
{
    return lstm_run(x, params, lengths, reverse, true);
}

#define PEN_INSTANTIATE(T)                                                                         \
    template class Graph<T>;                                                                       \
    template Var<T> matmul(const Var<T>&, const Var<T>&);                                          \
    template Var<T> add(const Var<T>&, const Var<T>&);                                             \
    template Var<T> sub(const Var<T>&, const Var<T>&);                                             \
    template Var<T> mul(const Var<T>&, const Var<T>&);                                             \
    template Var<T> scale(const Var<T>&, T);                                                       \
    template Var<T> add_scalar(const Var<T>&, T);                                                  \
    template Var<T> concat_last(std::span<const Var<T>>);                                          \
    template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);                   \
    template Var<T> select(const Var<T>&, std::size_t, std::size_t);                               \
    template Var<T> reshape(const Var<T>&, Shape);                                                 \
    template Var<T> gather_rows(const Var<T>&, std::span<const std::size_t>);                      \
    template Var<T> scatter_rows(const Var<T>&, std::span<const std::size_t>, std::size_t);        \
    template Var<T> sigmoid(const Var<T>&);                                                        \
    template Var<T> tanh(const Var<T>&);                                                           \
    template Var<T> exp(const Var<T>&);                                                            \
    template Var<T> log(const Var<T>&);                                                            \
    template Var<T> softmax(const Var<T>&);                                                        \
    template Var<T> log_softmax(const Var<T>&);                                                    \
    template Var<T> sum(const Var<T>&);                                                            \
    template Var<T> mean(const Var<T>&);                                                           \
    template Var<T> sum_last(const Var<T>&);                                                       \
    template Var<T> cosine_similarity(const Var<T>&, const Var<T>&);                               \
    template Var<T> detach(const Var<T>&);                                                         \
    template Var<T> lstm_last(const Var<T>&, const LstmParams<T>&, std::span<const std::size_t>);  \
    template Var<T> lstm_sequence(const Var<T>&, const LstmParams<T>&, std::span<const std::size_t>, bool);

PEN_INSTANTIATE(float)
PEN_INSTANTIATE(double)

#undef PEN_INSTANTIATE

}  // namespace pen
