// Named parameter storage plus the layer primitives the trackers are built
// from: convolutions (im2col + GEMM), linear maps, single-head cross
// attention.
#pragma once

#include <map>
#include <string>

#include "aquatrack/core/rng.hpp"
#include "aquatrack/nn/autodiff.hpp"

namespace aquatrack {

// Ordered name -> leaf Var map. Iteration order is lexicographic, which keeps
// optimizer traversal and checkpoint layout deterministic.
class ParamStore {
public:
    Var& create(const std::string& name, Tensor init) {
        auto [it, inserted] = params_.emplace(name, Var::leaf(std::move(init)));
        if (!inserted) throw std::logic_error("ParamStore: duplicate parameter " + name);
        return it->second;
    }

    Var& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("ParamStore: missing parameter " + name);
        return it->second;
    }

    const Var& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("ParamStore: missing parameter " + name);
        return it->second;
    }

    bool has(const std::string& name) const { return params_.count(name) > 0; }

    void zero_grads() {
        for (auto& [name, v] : params_) v.zero_grad();
    }

    double grad_norm() const {
        double s = 0;
        for (const auto& [name, v] : params_) {
            Tensor g = v.grad_or_zero();
            for (int64_t i = 0; i < g.size(); ++i) s += g[i] * g[i];
        }
        return std::sqrt(s);
    }

    std::map<std::string, Var>& all() { return params_; }
    const std::map<std::string, Var>& all() const { return params_; }

    int64_t total_size() const {
        int64_t n = 0;
        for (const auto& [name, v] : params_) n += v.value().size();
        return n;
    }

    // Copies values for every name present in both stores.
    void copy_matching_from(const ParamStore& src) {
        for (auto& [name, v] : params_) {
            auto it = src.all().find(name);
            if (it != src.all().end()) {
                require_same_shape(v.value(), it->second.value(), "copy_matching_from");
                v.mutable_value() = it->second.value();
            }
        }
    }

private:
    std::map<std::string, Var> params_;
};

namespace init {

inline Tensor he_normal(Rng& rng, std::vector<int> shape, int fan_in) {
    return rng.normal_tensor(std::move(shape), std::sqrt(2.0 / std::max(1, fan_in)));
}

inline Tensor xavier(Rng& rng, std::vector<int> shape, int fan_in, int fan_out) {
    return rng.normal_tensor(std::move(shape), std::sqrt(2.0 / std::max(1, fan_in + fan_out)));
}

inline Tensor embedding(Rng& rng, std::vector<int> shape) {
    return rng.normal_tensor(std::move(shape), 0.02);
}

}  // namespace init

// Conv2d over (H x W x Cin) with weight (k.k.Cin x Cout) and bias (Cout).
inline Var conv2d(const Var& x, const Var& w, const Var& b, int k, int stride, int pad) {
    int C = x.value().dim(2);
    if (w.value().dim(0) != k * k * C)
        throw std::invalid_argument("conv2d: weight rows != k*k*Cin");
    int H = x.value().dim(0), W = x.value().dim(1);
    int Ho = (H + 2 * pad - k) / stride + 1;
    int Wo = (W + 2 * pad - k) / stride + 1;
    Var col = im2col(x, k, stride, pad);
    Var out = add_rowvec(matmul(col, w), b);
    return reshape(out, {Ho, Wo, w.value().dim(1)});
}

// x: (n x in), w: (in x out), b: (out).
inline Var linear(const Var& x, const Var& w, const Var& b) {
    return add_rowvec(matmul(x, w), b);
}

struct AttentionOut {
    Var out;   // (n_q x p), residual added
    Var attn;  // (n_q x n_kv), rows sum to 1
};

// Single-head cross attention with residual connection. Projections carry no
// bias so zeroing the query projection yields exactly uniform attention.
inline AttentionOut cross_attention(const Var& queries, const Var& keys_values, const Var& wq,
                                    const Var& wk, const Var& wv, const Var& wo) {
    int p = queries.value().dim(1);
    Var q = matmul(queries, wq);
    Var k = matmul(keys_values, wk);
    Var v = matmul(keys_values, wv);
    Var logits = mul_scalar(matmul(q, transpose2d(k)), 1.0 / std::sqrt(static_cast<double>(p)));
    Var attn = softmax_rows(logits);
    Var out = add(queries, matmul(matmul(attn, v), wo));
    return {out, attn};
}

}  // namespace aquatrack
