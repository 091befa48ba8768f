#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace psrg {

// Named parameters and buffers of one network. Entry order is fixed at build
// time and shared by the optimizer state and the checkpoint layout, so it must
// stay stable across construction paths.
template <typename S>
struct ParamSetT {
    std::vector<std::pair<std::string, TensorT<S>>> params;
    std::vector<std::pair<std::string, TensorT<S>>> buffers;

    TensorT<S>& add_param(const std::string& name, TensorT<S> t) {
        if (has_param(name)) throw ConfigError("duplicate parameter name: " + name);
        t.set_requires_grad(true);
        params.emplace_back(name, std::move(t));
        return params.back().second;
    }

    TensorT<S>& add_buffer(const std::string& name, TensorT<S> t) {
        if (has_buffer(name)) throw ConfigError("duplicate buffer name: " + name);
        buffers.emplace_back(name, std::move(t));
        return buffers.back().second;
    }

    bool has_param(const std::string& name) const {
        for (const auto& [k, v] : params)
            if (k == name) return true;
        return false;
    }

    bool has_buffer(const std::string& name) const {
        for (const auto& [k, v] : buffers)
            if (k == name) return true;
        return false;
    }

    TensorT<S>& param(const std::string& name) {
        for (auto& [k, v] : params)
            if (k == name) return v;
        throw ConfigError("unknown parameter: " + name);
    }

    TensorT<S>& buffer(const std::string& name) {
        for (auto& [k, v] : buffers)
            if (k == name) return v;
        throw ConfigError("unknown buffer: " + name);
    }

    void zero_grad() {
        for (auto& [k, v] : params) v.zero_grad();
    }

    void set_trainable(bool trainable) {
        for (auto& [k, v] : params) v.set_requires_grad(trainable);
    }

    bool trainable() const {
        for (const auto& [k, v] : params)
            if (!v.requires_grad()) return false;
        return !params.empty();
    }

    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& [k, v] : params) n += v.numel();
        return n;
    }
};

using ParamSet = ParamSetT<float>;

// Adam moment estimates, one (m, v) pair per parameter in ParamSet order,
// plus the shared step counter. Everything here goes into checkpoints.
template <typename S>
struct AdamStateT {
    std::vector<std::vector<S>> m;
    std::vector<std::vector<S>> v;
    int64_t t = 0;
    S beta1 = S(0.9);
    S beta2 = S(0.999);
    S eps = S(1e-8);

    static AdamStateT init(const ParamSetT<S>& ps) {
        AdamStateT st;
        st.m.reserve(ps.params.size());
        st.v.reserve(ps.params.size());
        for (const auto& [k, p] : ps.params) {
            st.m.emplace_back(static_cast<std::size_t>(p.numel()), S(0));
            st.v.emplace_back(static_cast<std::size_t>(p.numel()), S(0));
        }
        return st;
    }
};

using AdamState = AdamStateT<float>;

// One Adam update over every parameter in the set. Every parameter must have
// received a gradient buffer this step (zeros count, absence does not), and
// stepping a frozen set is a bug upstream, so both are rejected outright.
template <typename S>
void adam_step(ParamSetT<S>& ps, AdamStateT<S>& st, S lr) {
    if (st.m.size() != ps.params.size())
        throw ContractError("adam_step: optimizer state does not match parameter set");
    st.t += 1;
    const S bc1 = S(1) - static_cast<S>(std::pow(double(st.beta1), double(st.t)));
    const S bc2 = S(1) - static_cast<S>(std::pow(double(st.beta2), double(st.t)));
    for (std::size_t i = 0; i < ps.params.size(); ++i) {
        TensorT<S>& p = ps.params[i].second;
        if (!p.requires_grad())
            throw ContractError("adam_step: attempt to update frozen parameter " + ps.params[i].first);
        if (!p.has_grad())
            throw ContractError("adam_step: missing gradient for " + ps.params[i].first);
        if (st.m[i].size() != static_cast<std::size_t>(p.numel()))
            throw ContractError("adam_step: state size mismatch for " + ps.params[i].first);
        S* m = st.m[i].data();
        S* v = st.v[i].data();
        S* w = p.data();
        const S* g = p.grad();
        for (int64_t j = 0, n = p.numel(); j < n; ++j) {
            m[j] = st.beta1 * m[j] + (S(1) - st.beta1) * g[j];
            v[j] = st.beta2 * v[j] + (S(1) - st.beta2) * g[j] * g[j];
            w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + st.eps);
        }
    }
}

// He-uniform initialization: limit = sqrt(6 / fan_in), biases start at zero.

template <typename S>
TensorT<S> he_conv_weight(int64_t cout, int64_t cin, int64_t kh, int64_t kw, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(cin * kh * kw));
    return TensorT<S>::rand_uniform({cout, cin, kh, kw}, rng, S(-limit), S(limit));
}

template <typename S>
TensorT<S> he_dense_weight(int64_t in, int64_t out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    return TensorT<S>::rand_uniform({in, out}, rng, S(-limit), S(limit));
}

}  // namespace psrg
