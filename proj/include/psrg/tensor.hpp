#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace psrg {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

namespace detail {
inline int& no_grad_depth() {
    thread_local int depth = 0;
    return depth;
}
}  // namespace detail

// RAII switch that disables graph recording on the current thread. Ops still
// compute values, they just come out as plain leaves with no history.
class NoGradGuard {
public:
    NoGradGuard() { ++detail::no_grad_depth(); }
    ~NoGradGuard() { --detail::no_grad_depth(); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth() == 0; }

// One vertex of the autodiff tape. `backprop` reads this node's grad and
// accumulates into the parents' grads; it captures the parent pointers by
// value but never the node itself, so there are no ownership cycles.
template <typename S>
struct TensorNodeT {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNodeT>> parents;
    std::function<void(TensorNodeT&)> backprop;

    int64_t numel() const { return static_cast<int64_t>(value.size()); }

    // Grad buffer, zero-initialized on first touch.
    S* acc() {
        if (grad.empty()) grad.assign(value.size(), S(0));
        return grad.data();
    }
};

template <typename S>
class TensorT {
public:
    using Node = TensorNodeT<S>;
    using scalar_type = S;

    TensorT() = default;

    explicit TensorT(Shape shape, S fill = S(0)) {
        node_ = std::make_shared<Node>();
        node_->shape = std::move(shape);
        node_->value.assign(static_cast<std::size_t>(shape_numel(node_->shape)), fill);
    }

    TensorT(Shape shape, std::vector<S> data) {
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw ShapeError("tensor data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        node_ = std::make_shared<Node>();
        node_->shape = std::move(shape);
        node_->value = std::move(data);
    }

    static TensorT zeros(const Shape& shape) { return TensorT(shape, S(0)); }
    static TensorT full(const Shape& shape, S v) { return TensorT(shape, v); }

    static TensorT randn(const Shape& shape, Rng& rng, S stddev = S(1)) {
        TensorT t(shape);
        for (auto& v : t.node_->value) v = static_cast<S>(rng.normal()) * stddev;
        return t;
    }

    static TensorT rand_uniform(const Shape& shape, Rng& rng, S lo, S hi) {
        TensorT t(shape);
        for (auto& v : t.node_->value) v = static_cast<S>(rng.uniform(double(lo), double(hi)));
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return check()->shape; }
    int rank() const { return static_cast<int>(check()->shape.size()); }
    int64_t dim(int i) const { return check()->shape.at(static_cast<std::size_t>(i)); }
    int64_t numel() const { return check()->numel(); }

    S* data() { return check()->value.data(); }
    const S* data() const { return check()->value.data(); }
    std::vector<S>& values() { return check()->value; }
    const std::vector<S>& values() const { return check()->value; }

    // Flat-index and NCHW-style element access, mainly for tests and I/O.
    S& operator[](int64_t i) { return check()->value[static_cast<std::size_t>(i)]; }
    S operator[](int64_t i) const { return check()->value[static_cast<std::size_t>(i)]; }
    S& at(std::initializer_list<int64_t> idx) { return check()->value[static_cast<std::size_t>(offset(idx))]; }
    S at(std::initializer_list<int64_t> idx) const { return check()->value[static_cast<std::size_t>(offset(idx))]; }

    S item() const {
        if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
        return check()->value[0];
    }

    bool requires_grad() const { return node_ && node_->requires_grad; }

    TensorT& set_requires_grad(bool v) {
        if (!check()->parents.empty())
            throw ContractError("requires_grad can only be toggled on leaf tensors");
        node_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    S* grad() { return check()->acc(); }
    const std::vector<S>& grad_values() {
        check()->acc();
        return node_->grad;
    }

    void zero_grad() {
        if (node_ && !node_->grad.empty())
            std::fill(node_->grad.begin(), node_->grad.end(), S(0));
    }

    // Copy of the values as a fresh leaf with no history.
    TensorT detach() const {
        TensorT t;
        t.node_ = std::make_shared<Node>();
        t.node_->shape = check()->shape;
        t.node_->value = node_->value;
        return t;
    }

    template <typename S2>
    TensorT<S2> cast() const {
        TensorT<S2> t(check()->shape);
        const S* src = node_->value.data();
        S2* dst = t.data();
        for (int64_t i = 0, n = numel(); i < n; ++i) dst[i] = static_cast<S2>(src[i]);
        return t;
    }

    // Runs reverse-mode accumulation from this scalar. Grads add into any
    // existing buffers, so callers zero leaf grads between steps.
    void backward() {
        if (!node_) throw ContractError("backward() on an empty tensor");
        if (node_->numel() != 1)
            throw ContractError("backward() requires a scalar, got " + shape_str(node_->shape));
        if (!node_->requires_grad)
            throw ContractError("backward() on a tensor with no grad path");

        // Iterative post-order DFS over the requires_grad subgraph; reverse
        // post-order is a topological order, so each node's grad is complete
        // before its backprop runs.
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        std::vector<std::pair<Node*, std::size_t>> stack;
        stack.emplace_back(node_.get(), 0);
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& top = stack.back();
            Node* n = top.first;
            if (top.second < n->parents.size()) {
                Node* p = n->parents[top.second].get();
                ++top.second;
                if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        node_->acc()[0] += S(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if ((*it)->backprop) (*it)->backprop(**it);
        }
    }

    std::shared_ptr<Node>& node() { return node_; }
    const std::shared_ptr<Node>& node() const { return node_; }

    // Wraps an already computed value as a graph vertex. Parents and the
    // closure are dropped when recording is off or nothing upstream needs
    // gradients, so inference builds no tape.
    static TensorT make_op(Shape shape, std::vector<S> value,
                           std::vector<TensorT> parents,
                           std::function<void(Node&)> backprop) {
        TensorT t(std::move(shape), std::move(value));
        bool needs = false;
        if (grad_enabled()) {
            for (const auto& p : parents) needs = needs || p.requires_grad();
        }
        if (needs) {
            t.node_->requires_grad = true;
            t.node_->parents.reserve(parents.size());
            for (auto& p : parents) t.node_->parents.push_back(p.node());
            t.node_->backprop = std::move(backprop);
        }
        return t;
    }

private:
    std::shared_ptr<Node> node_;

    const std::shared_ptr<Node>& check() const {
        if (!node_) throw ContractError("use of an empty tensor");
        return node_;
    }

    int64_t offset(std::initializer_list<int64_t> idx) const {
        const Shape& s = check()->shape;
        if (idx.size() != s.size())
            throw ShapeError("index rank " + std::to_string(idx.size()) + " vs tensor " + shape_str(s));
        int64_t off = 0;
        std::size_t d = 0;
        for (int64_t i : idx) {
            if (i < 0 || i >= s[d]) throw ShapeError("index out of range in dim " + std::to_string(d));
            off = off * s[d] + i;
            ++d;
        }
        return off;
    }
};

using Tensor = TensorT<float>;

template <typename S>
void assert_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

template <typename S>
void assert_finite(const TensorT<S>& t, const char* what) {
    const S* p = t.data();
    for (int64_t i = 0, n = t.numel(); i < n; ++i) {
        if (!std::isfinite(static_cast<double>(p[i])))
            throw NumericError(std::string(what) + ": non-finite value at flat index " + std::to_string(i));
    }
}

// Elementwise arithmetic. Shapes must match exactly; there is no broadcasting
// anywhere in the engine, which keeps backward rules trivial to audit.

template <typename S>
TensorT<S> operator+(const TensorT<S>& a, const TensorT<S>& b) {
    assert_same_shape(a, b, "add");
    std::vector<S> out(a.values());
    const S* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
    auto an = a.node();
    auto bn = b.node();
    return TensorT<S>::make_op(a.shape(), std::move(out), {a, b}, [an, bn](TensorNodeT<S>& self) {
        const S* g = self.grad.data();
        const std::size_t n = self.value.size();
        if (an->requires_grad) {
            S* ga = an->acc();
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        }
        if (bn->requires_grad) {
            S* gb = bn->acc();
            for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
        }
    });
}

template <typename S>
TensorT<S> operator-(const TensorT<S>& a, const TensorT<S>& b) {
    assert_same_shape(a, b, "sub");
    std::vector<S> out(a.values());
    const S* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= pb[i];
    auto an = a.node();
    auto bn = b.node();
    return TensorT<S>::make_op(a.shape(), std::move(out), {a, b}, [an, bn](TensorNodeT<S>& self) {
        const S* g = self.grad.data();
        const std::size_t n = self.value.size();
        if (an->requires_grad) {
            S* ga = an->acc();
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        }
        if (bn->requires_grad) {
            S* gb = bn->acc();
            for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
        }
    });
}

template <typename S>
TensorT<S> operator*(const TensorT<S>& a, const TensorT<S>& b) {
    assert_same_shape(a, b, "mul");
    std::vector<S> out(a.values());
    const S* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= pb[i];
    auto an = a.node();
    auto bn = b.node();
    return TensorT<S>::make_op(a.shape(), std::move(out), {a, b}, [an, bn](TensorNodeT<S>& self) {
        const S* g = self.grad.data();
        const std::size_t n = self.value.size();
        if (an->requires_grad) {
            S* ga = an->acc();
            const S* vb = bn->value.data();
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * vb[i];
        }
        if (bn->requires_grad) {
            S* gb = bn->acc();
            const S* va = an->value.data();
            for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * va[i];
        }
    });
}

template <typename S>
TensorT<S> operator*(const TensorT<S>& a, S s) {
    std::vector<S> out(a.values());
    for (auto& v : out) v *= s;
    auto an = a.node();
    return TensorT<S>::make_op(a.shape(), std::move(out), {a}, [an, s](TensorNodeT<S>& self) {
        const S* g = self.grad.data();
        S* ga = an->acc();
        for (std::size_t i = 0; i < self.value.size(); ++i) ga[i] += g[i] * s;
    });
}

template <typename S>
TensorT<S> operator*(S s, const TensorT<S>& a) {
    return a * s;
}

template <typename S>
TensorT<S> add_scalar(const TensorT<S>& a, S s) {
    std::vector<S> out(a.values());
    for (auto& v : out) v += s;
    auto an = a.node();
    return TensorT<S>::make_op(a.shape(), std::move(out), {a}, [an](TensorNodeT<S>& self) {
        const S* g = self.grad.data();
        S* ga = an->acc();
        for (std::size_t i = 0; i < self.value.size(); ++i) ga[i] += g[i];
    });
}

// s - a, used for terms like log(1 - d).
template <typename S>
TensorT<S> rsub_scalar(S s, const TensorT<S>& a) {
    std::vector<S> out(a.values());
    for (auto& v : out) v = s - v;
    auto an = a.node();
    return TensorT<S>::make_op(a.shape(), std::move(out), {a}, [an](TensorNodeT<S>& self) {
        const S* g = self.grad.data();
        S* ga = an->acc();
        for (std::size_t i = 0; i < self.value.size(); ++i) ga[i] -= g[i];
    });
}

template <typename S>
TensorT<S> operator-(const TensorT<S>& a) {
    return a * S(-1);
}

template <typename S>
TensorT<S> square(const TensorT<S>& a) {
    return a * a;
}

template <typename S>
TensorT<S> sum(const TensorT<S>& a) {
    S total = S(0);
    const S* p = a.data();
    for (int64_t i = 0, n = a.numel(); i < n; ++i) total += p[i];
    auto an = a.node();
    return TensorT<S>::make_op({1}, {total}, {a}, [an](TensorNodeT<S>& self) {
        const S g = self.grad[0];
        S* ga = an->acc();
        for (std::size_t i = 0; i < an->value.size(); ++i) ga[i] += g;
    });
}

template <typename S>
TensorT<S> mean(const TensorT<S>& a) {
    const int64_t n = a.numel();
    if (n == 0) throw ShapeError("mean of an empty tensor");
    return sum(a) * (S(1) / static_cast<S>(n));
}

// Natural log with the argument clamped to [eps, inf). The clamp keeps
// adversarial terms finite when a sigmoid saturates; entries at or below eps
// get zero gradient, matching the flat clamped region.
template <typename S>
TensorT<S> log_clamped(const TensorT<S>& a, S eps = S(1e-12)) {
    std::vector<S> out(a.values());
    for (auto& v : out) v = std::log(std::max(v, eps));
    auto an = a.node();
    return TensorT<S>::make_op(a.shape(), std::move(out), {a}, [an, eps](TensorNodeT<S>& self) {
        const S* g = self.grad.data();
        const S* v = an->value.data();
        S* ga = an->acc();
        for (std::size_t i = 0; i < self.value.size(); ++i) {
            if (v[i] > eps) ga[i] += g[i] / v[i];
        }
    });
}

template <typename S>
TensorT<S> reshape(const TensorT<S>& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel())
        throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(new_shape) +
                         " changes element count");
    std::vector<S> out(a.values());
    auto an = a.node();
    return TensorT<S>::make_op(std::move(new_shape), std::move(out), {a}, [an](TensorNodeT<S>& self) {
        const S* g = self.grad.data();
        S* ga = an->acc();
        for (std::size_t i = 0; i < self.value.size(); ++i) ga[i] += g[i];
    });
}

template <typename S>
TensorT<S> flatten_batch(const TensorT<S>& a) {
    if (a.rank() < 2) throw ShapeError("flatten_batch needs rank >= 2, got " + shape_str(a.shape()));
    return reshape(a, {a.dim(0), a.numel() / a.dim(0)});
}

}  // namespace psrg
