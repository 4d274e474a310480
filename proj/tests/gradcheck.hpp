// Central finite-difference gradient oracle. Lives in test code only; it never
// touches the reverse-mode path it is checking.
#pragma once

#include <functional>
#include <sstream>

#include "aquatrack/core/rng.hpp"
#include "aquatrack/nn/layers.hpp"

namespace aquatrack::testing {

struct GradCheckOptions {
    double step = 1e-5;
    double rtol = 1e-4;
    double atol = 1e-7;
    int max_coords_per_param = 40;  // random subset when a parameter is larger
};

struct GradCheckResult {
    bool pass = true;
    double worst_ratio = 0.0;  // |analytic - fd| / (atol + rtol*max(|a|,|fd|)), pass iff <= 1
    std::string worst_where;
    int coords_checked = 0;
};

// Checks d(loss)/d(param) for every leaf in `params` against central
// differences of `forward` (which must rebuild the graph from the leaves).
inline GradCheckResult grad_check(ParamStore& params, const std::function<Var()>& forward,
                                  Rng& rng, GradCheckOptions opt = {}) {
    params.zero_grads();
    Var loss = forward();
    loss.backward();

    std::map<std::string, Tensor> analytic;
    for (auto& [name, v] : params.all()) analytic[name] = v.grad_or_zero();

    auto eval = [&]() {
        NoGradGuard ng;
        return forward().value().item();
    };

    GradCheckResult res;
    for (auto& [name, v] : params.all()) {
        Tensor& w = v.mutable_value();
        int64_t n = w.size();
        std::vector<int64_t> coords;
        if (n <= opt.max_coords_per_param) {
            for (int64_t i = 0; i < n; ++i) coords.push_back(i);
        } else {
            for (int c = 0; c < opt.max_coords_per_param; ++c)
                coords.push_back(rng.uniform_int(0, static_cast<int>(n - 1)));
        }
        for (int64_t i : coords) {
            double orig = w[i];
            w[i] = orig + opt.step;
            double fp = eval();
            w[i] = orig - opt.step;
            double fm = eval();
            w[i] = orig;
            double fd = (fp - fm) / (2.0 * opt.step);
            double a = analytic[name][i];
            double denom = opt.atol + opt.rtol * std::max(std::abs(a), std::abs(fd));
            double ratio = std::abs(a - fd) / denom;
            ++res.coords_checked;
            if (ratio > res.worst_ratio) {
                res.worst_ratio = ratio;
                std::ostringstream os;
                os << name << "[" << i << "]: analytic=" << a << " fd=" << fd;
                res.worst_where = os.str();
            }
        }
    }
    res.pass = res.worst_ratio <= 1.0;
    return res;
}

}  // namespace aquatrack::testing
