// Reverse-mode automatic differentiation over float64 tensors.
//
// A Var wraps a value tensor plus an optional graph node recording how it was
// produced. backward() on a scalar Var runs the tape in reverse topological
// order and accumulates gradients into every leaf that requires them.
// Backprop closures read self.value and self.parents[i]->value, so no cycles
// are created. Matrix products go through Eigen.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "aquatrack/core/tensor.hpp"

namespace aquatrack {

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

// RAII guard disabling graph construction (inference / frozen-teacher passes).
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
    ~NoGradGuard() { grad_mode_flag() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

class Var {
public:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool has_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backprop;

        Tensor& ensure_grad() {
            if (!has_grad) {
                grad = Tensor(value.shape());
                has_grad = true;
            }
            return grad;
        }
        void clear_grad() {
            has_grad = false;
            grad = Tensor();
        }
    };

    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Var constant(Tensor t) {
        auto n = std::make_shared<Node>();
        n->value = std::move(t);
        return Var(n);
    }

    static Var leaf(Tensor t) {
        auto n = std::make_shared<Node>();
        n->value = std::move(t);
        n->requires_grad = true;
        return Var(n);
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    // Gradient accumulated by the last backward(); zeros if never reached.
    Tensor grad_or_zero() const {
        if (node_->has_grad) return node_->grad;
        return Tensor(node_->value.shape());
    }

    void zero_grad() { node_->clear_grad(); }

    Var detach() const {
        auto n = std::make_shared<Node>();
        n->value = node_->value;
        return Var(n);
    }

    void backward() const {
        if (!node_) throw std::logic_error("backward on undefined Var");
        if (node_->value.size() != 1)
            throw std::logic_error("backward requires a scalar, got " + node_->value.shape_str());
        std::vector<Node*> order = topo_order();
        node_->ensure_grad()[0] = 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            if (n->backprop && n->has_grad) n->backprop(*n);
        }
    }

    std::shared_ptr<Node> node() const { return node_; }

private:
    std::vector<Node*> topo_order() const {
        std::vector<Node*> order;
        std::unordered_set<Node*> visited;
        struct Frame {
            Node* n;
            size_t next;
        };
        std::vector<Frame> stack;
        if (node_->requires_grad) stack.push_back({node_.get(), 0});
        visited.insert(node_.get());
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next < f.n->parents.size()) {
                Node* p = f.n->parents[f.next++].get();
                if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
            } else {
                order.push_back(f.n);
                stack.pop_back();
            }
        }
        return order;
    }

    std::shared_ptr<Node> node_;
};

namespace detail {

inline Var make_op(Tensor value, std::vector<Var> parents,
                   std::function<void(Var::Node&)> backprop) {
    auto n = std::make_shared<Var::Node>();
    n->value = std::move(value);
    bool rg = false;
    if (grad_mode_flag())
        for (const auto& p : parents) rg = rg || p.requires_grad();
    n->requires_grad = rg;
    if (rg) {
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backprop = std::move(backprop);
    }
    return Var(n);
}

inline void accum(const std::shared_ptr<Var::Node>& p, const Tensor& g) {
    if (!p->requires_grad) return;
    Tensor& pg = p->ensure_grad();
    const double* src = g.data();
    double* dst = pg.data();
    for (int64_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and scalar ops

inline Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return detail::make_op(std::move(out), {a, b}, [](Var::Node& self) {
        detail::accum(self.parents[0], self.grad);
        detail::accum(self.parents[1], self.grad);
    });
}

inline Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return detail::make_op(std::move(out), {a, b}, [](Var::Node& self) {
        detail::accum(self.parents[0], self.grad);
        if (self.parents[1]->requires_grad) {
            Tensor& pg = self.parents[1]->ensure_grad();
            for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] -= self.grad[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return detail::make_op(std::move(out), {a, b}, [](Var::Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            Tensor& pg = self.parents[0]->ensure_grad();
            for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += self.grad[i] * bv[i];
        }
        if (self.parents[1]->requires_grad) {
            Tensor& pg = self.parents[1]->ensure_grad();
            for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += self.grad[i] * av[i];
        }
    });
}

inline Var square(const Var& a) { return mul(a, a); }

inline Var divv(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "divv");
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] /= b.value()[i];
    return detail::make_op(std::move(out), {a, b}, [](Var::Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            Tensor& pg = self.parents[0]->ensure_grad();
            for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += self.grad[i] / bv[i];
        }
        if (self.parents[1]->requires_grad) {
            Tensor& pg = self.parents[1]->ensure_grad();
            for (int64_t i = 0; i < self.grad.size(); ++i)
                pg[i] -= self.grad[i] * av[i] / (bv[i] * bv[i]);
        }
    });
}

// log(1 + exp(x)), stable on both tails; derivative is sigmoid(x).
inline Var softplus(const Var& a) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) {
        double x = out[i];
        out[i] = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }
    return detail::make_op(std::move(out), {a}, [](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const Tensor& av = self.parents[0]->value;
        Tensor& pg = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.size(); ++i) {
            double x = av[i];
            double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
            pg[i] += s * self.grad[i];
        }
    });
}

inline Var add_scalar(const Var& a, double s) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] += s;
    return detail::make_op(std::move(out), {a}, [](Var::Node& self) {
        detail::accum(self.parents[0], self.grad);
    });
}

inline Var mul_scalar(const Var& a, double s) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= s;
    return detail::make_op(std::move(out), {a}, [s](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += s * self.grad[i];
    });
}

inline Var neg(const Var& a) { return mul_scalar(a, -1.0); }

inline Var abs_(const Var& a) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::abs(out[i]);
    return detail::make_op(std::move(out), {a}, [](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const Tensor& av = self.parents[0]->value;
        Tensor& pg = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.size(); ++i) {
            double s = av[i] > 0 ? 1.0 : (av[i] < 0 ? -1.0 : 0.0);
            pg[i] += s * self.grad[i];
        }
    });
}

inline Var exp_(const Var& a) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    return detail::make_op(std::move(out), {a}, [](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += self.value[i] * self.grad[i];
    });
}

inline Var log_(const Var& a) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
    return detail::make_op(std::move(out), {a}, [](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const Tensor& av = self.parents[0]->value;
        Tensor& pg = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += self.grad[i] / av[i];
    });
}

inline Var sigmoid(const Var& a) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) {
        double x = out[i];
        out[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    return detail::make_op(std::move(out), {a}, [](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.size(); ++i) {
            double y = self.value[i];
            pg[i] += y * (1.0 - y) * self.grad[i];
        }
    });
}

inline Var gelu(const Var& a) {
    static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    static const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) {
        double x = out[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    }
    return detail::make_op(std::move(out), {a}, [](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const Tensor& av = self.parents[0]->value;
        Tensor& pg = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.size(); ++i) {
            double x = av[i];
            double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            pg[i] += (cdf + x * pdf) * self.grad[i];
        }
    });
}

// Elementwise maximum; gradient routes to the larger input (ties to a).
inline Var maximum(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "maximum");
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], b.value()[i]);
    return detail::make_op(std::move(out), {a, b}, [](Var::Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        bool ga = self.parents[0]->requires_grad;
        bool gb = self.parents[1]->requires_grad;
        if (!ga && !gb) return;
        Tensor* pa = ga ? &self.parents[0]->ensure_grad() : nullptr;
        Tensor* pb = gb ? &self.parents[1]->ensure_grad() : nullptr;
        for (int64_t i = 0; i < self.grad.size(); ++i) {
            if (av[i] >= bv[i]) {
                if (pa) (*pa)[i] += self.grad[i];
            } else if (pb) {
                (*pb)[i] += self.grad[i];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(const Var& a) {
    double s = 0;
    for (int64_t i = 0; i < a.value().size(); ++i) s += a.value()[i];
    return detail::make_op(Tensor::scalar(s), {a}, [](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        double g = self.grad[0];
        for (int64_t i = 0; i < pg.size(); ++i) pg[i] += g;
    });
}

inline Var mean(const Var& a) {
    int64_t n = a.value().size();
    if (n == 0) throw std::invalid_argument("mean of empty tensor");
    double s = 0;
    for (int64_t i = 0; i < n; ++i) s += a.value()[i];
    return detail::make_op(Tensor::scalar(s / static_cast<double>(n)), {a}, [n](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        double g = self.grad[0] / static_cast<double>(n);
        for (int64_t i = 0; i < pg.size(); ++i) pg[i] += g;
    });
}

// ---------------------------------------------------------------------------
// Shape ops

inline Var reshape(const Var& a, std::vector<int> shape) {
    if (Tensor::checked_numel(shape) != a.value().size())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor out(std::move(shape), a.value().vec());
    return detail::make_op(std::move(out), {a}, [](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += self.grad[i];
    });
}

inline Var transpose2d(const Var& a) {
    int r = a.value().dim(0), c = a.value().dim(1);
    Tensor out({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(j, i) = a.value().at(i, j);
    return detail::make_op(std::move(out), {a}, [r, c](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) pg.at(i, j) += self.grad.at(j, i);
    });
}

inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
    int cols = parts[0].value().dim(1);
    int rows = 0;
    for (const auto& p : parts) {
        if (p.value().rank() != 2 || p.value().dim(1) != cols)
            throw std::invalid_argument("concat_rows: column mismatch");
        rows += p.value().dim(0);
    }
    Tensor out({rows, cols});
    int64_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + off);
        off += p.value().size();
    }
    return detail::make_op(std::move(out), parts, [](Var::Node& self) {
        int64_t off = 0;
        for (auto& p : self.parents) {
            int64_t n = p->value.size();
            if (p->requires_grad) {
                Tensor& pg = p->ensure_grad();
                for (int64_t i = 0; i < n; ++i) pg[i] += self.grad[off + i];
            }
            off += n;
        }
    });
}

inline Var slice_rows(const Var& a, int r0, int r1) {
    int rows = a.value().dim(0), cols = a.value().dim(1);
    if (r0 < 0 || r1 > rows || r0 >= r1)
        throw std::invalid_argument("slice_rows: bad range");
    Tensor out({r1 - r0, cols});
    std::copy(a.value().data() + static_cast<int64_t>(r0) * cols,
              a.value().data() + static_cast<int64_t>(r1) * cols, out.data());
    return detail::make_op(std::move(out), {a}, [r0, cols](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        int64_t off = static_cast<int64_t>(r0) * cols;
        for (int64_t i = 0; i < self.grad.size(); ++i) pg[off + i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(const Var& a, const Var& b) {
    if (a.value().rank() != 2 || b.value().rank() != 2 || a.value().dim(1) != b.value().dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " + a.value().shape_str() +
                                    " x " + b.value().shape_str());
    int m = a.value().dim(0), k = a.value().dim(1), n = b.value().dim(1);
    Tensor out({m, n});
    {
        detail::ECMap A(a.value().data(), m, k), B(b.value().data(), k, n);
        detail::EMap C(out.data(), m, n);
        C.noalias() = A * B;
    }
    return detail::make_op(std::move(out), {a, b}, [m, k, n](Var::Node& self) {
        detail::ECMap G(self.grad.data(), m, n);
        detail::ECMap A(self.parents[0]->value.data(), m, k);
        detail::ECMap B(self.parents[1]->value.data(), k, n);
        if (self.parents[0]->requires_grad) {
            detail::EMap GA(self.parents[0]->ensure_grad().data(), m, k);
            GA.noalias() += G * B.transpose();
        }
        if (self.parents[1]->requires_grad) {
            detail::EMap GB(self.parents[1]->ensure_grad().data(), k, n);
            GB.noalias() += A.transpose() * G;
        }
    });
}

// a: (r x c), bias: (c); adds bias to every row.
inline Var add_rowvec(const Var& a, const Var& bias) {
    int r = a.value().dim(0), c = a.value().dim(1);
    if (bias.value().size() != c) throw std::invalid_argument("add_rowvec: bias size mismatch");
    Tensor out = a.value();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(i, j) += bias.value()[j];
    return detail::make_op(std::move(out), {a, bias}, [r, c](Var::Node& self) {
        detail::accum(self.parents[0], self.grad);
        if (self.parents[1]->requires_grad) {
            Tensor& pg = self.parents[1]->ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) pg[j] += self.grad.at(i, j);
        }
    });
}

// ---------------------------------------------------------------------------
// Row-wise softmax machinery

inline Var softmax_rows(const Var& a) {
    int r = a.value().dim(0), c = a.value().dim(1);
    Tensor out({r, c});
    for (int i = 0; i < r; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j) m = std::max(m, a.value().at(i, j));
        double z = 0;
        for (int j = 0; j < c; ++j) z += std::exp(a.value().at(i, j) - m);
        for (int j = 0; j < c; ++j) out.at(i, j) = std::exp(a.value().at(i, j) - m) / z;
    }
    return detail::make_op(std::move(out), {a}, [r, c](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        for (int i = 0; i < r; ++i) {
            double dot = 0;
            for (int j = 0; j < c; ++j) dot += self.grad.at(i, j) * self.value.at(i, j);
            for (int j = 0; j < c; ++j)
                pg.at(i, j) += self.value.at(i, j) * (self.grad.at(i, j) - dot);
        }
    });
}

// (r x c) -> (r x 1) of log(sum_j exp(a_ij)), numerically stable.
inline Var logsumexp_rows(const Var& a) {
    int r = a.value().dim(0), c = a.value().dim(1);
    Tensor out({r, 1});
    for (int i = 0; i < r; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j) m = std::max(m, a.value().at(i, j));
        double z = 0;
        for (int j = 0; j < c; ++j) z += std::exp(a.value().at(i, j) - m);
        out.at(i, 0) = m + std::log(z);
    }
    return detail::make_op(std::move(out), {a}, [r, c](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const Tensor& av = self.parents[0]->value;
        Tensor& pg = self.parents[0]->ensure_grad();
        for (int i = 0; i < r; ++i) {
            double lse = self.value.at(i, 0);
            double g = self.grad.at(i, 0);
            for (int j = 0; j < c; ++j) pg.at(i, j) += g * std::exp(av.at(i, j) - lse);
        }
    });
}

// Normalizes a vector (any shape, treated flat) to unit L2 norm.
// Near-zero inputs degrade to x / eps so the map stays differentiable.
inline Var l2_normalize(const Var& a) {
    constexpr double eps = 1e-12;
    double nrm = 0;
    for (int64_t i = 0; i < a.value().size(); ++i) nrm += a.value()[i] * a.value()[i];
    nrm = std::sqrt(nrm);
    double denom = std::max(nrm, eps);
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] /= denom;
    return detail::make_op(std::move(out), {a}, [nrm, denom](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        if (nrm <= 1e-12) {
            for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += self.grad[i] / denom;
            return;
        }
        double dot = 0;
        for (int64_t i = 0; i < self.grad.size(); ++i) dot += self.grad[i] * self.value[i];
        for (int64_t i = 0; i < self.grad.size(); ++i)
            pg[i] += (self.grad[i] - self.value[i] * dot) / denom;
    });
}

// ---------------------------------------------------------------------------
// Lookup / spatial ops

inline Var gather_rows(const Var& table, std::vector<int> idx) {
    int v = table.value().dim(0), p = table.value().dim(1);
    for (int i : idx)
        if (i < 0 || i >= v) throw std::invalid_argument("gather_rows: index out of range");
    Tensor out({static_cast<int>(idx.size()), p});
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy(table.value().data() + static_cast<int64_t>(idx[r]) * p,
                  table.value().data() + static_cast<int64_t>(idx[r] + 1) * p,
                  out.data() + static_cast<int64_t>(r) * p);
    return detail::make_op(std::move(out), {table}, [idx = std::move(idx), p](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        for (size_t r = 0; r < idx.size(); ++r)
            for (int j = 0; j < p; ++j)
                pg[static_cast<int64_t>(idx[r]) * p + j] += self.grad[static_cast<int64_t>(r) * p + j];
    });
}

// x: (H x W x C) -> ((H'.W') x (k.k.C)) patch matrix; out-of-bounds taps are zero.
inline Var im2col(const Var& x, int k, int stride, int pad) {
    int H = x.value().dim(0), W = x.value().dim(1), C = x.value().dim(2);
    int Ho = (H + 2 * pad - k) / stride + 1;
    int Wo = (W + 2 * pad - k) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("im2col: kernel larger than input");
    std::vector<int64_t> map(static_cast<size_t>(Ho) * Wo * k * k * C, -1);
    Tensor out({Ho * Wo, k * k * C});
    int64_t o = 0;
    for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    int iy = oy * stride + ky - pad;
                    int ix = ox * stride + kx - pad;
                    for (int c = 0; c < C; ++c, ++o) {
                        if (iy >= 0 && iy < H && ix >= 0 && ix < W) {
                            int64_t src = (static_cast<int64_t>(iy) * W + ix) * C + c;
                            map[static_cast<size_t>(o)] = src;
                            out[o] = x.value()[src];
                        }
                    }
                }
    return detail::make_op(std::move(out), {x}, [map = std::move(map)](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.size(); ++i)
            if (map[static_cast<size_t>(i)] >= 0) pg[map[static_cast<size_t>(i)]] += self.grad[i];
    });
}

inline Var upsample2x(const Var& x) {
    int H = x.value().dim(0), W = x.value().dim(1), C = x.value().dim(2);
    Tensor out({2 * H, 2 * W, C});
    for (int i = 0; i < 2 * H; ++i)
        for (int j = 0; j < 2 * W; ++j)
            for (int c = 0; c < C; ++c) out.at(i, j, c) = x.value().at(i / 2, j / 2, c);
    return detail::make_op(std::move(out), {x}, [H, W, C](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        for (int i = 0; i < 2 * H; ++i)
            for (int j = 0; j < 2 * W; ++j)
                for (int c = 0; c < C; ++c) pg.at(i / 2, j / 2, c) += self.grad.at(i, j, c);
    });
}

// Block-average pooling by integer factor f.
inline Var avgpool(const Var& x, int f) {
    int H = x.value().dim(0), W = x.value().dim(1), C = x.value().dim(2);
    if (H % f != 0 || W % f != 0) throw std::invalid_argument("avgpool: size not divisible");
    int Ho = H / f, Wo = W / f;
    double inv = 1.0 / (static_cast<double>(f) * f);
    Tensor out({Ho, Wo, C});
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
            for (int c = 0; c < C; ++c) out.at(i / f, j / f, c) += x.value().at(i, j, c) * inv;
    return detail::make_op(std::move(out), {x}, [H, W, C, f, inv](Var::Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j)
                for (int c = 0; c < C; ++c) pg.at(i, j, c) += self.grad.at(i / f, j / f, c) * inv;
    });
}

}  // namespace aquatrack
