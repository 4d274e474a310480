// AdamW with optional cosine learning-rate decay.
#pragma once

#include <cmath>
#include <functional>
#include <map>

#include "aquatrack/nn/layers.hpp"

namespace aquatrack {

struct OptimConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
    bool cosine_decay = false;
    int64_t total_steps = 0;  // required when cosine_decay is set
};

class AdamW {
public:
    explicit AdamW(OptimConfig cfg) : cfg_(cfg) {}

    double current_lr() const {
        if (!cfg_.cosine_decay || cfg_.total_steps <= 0) return cfg_.lr;
        double t = std::min<double>(static_cast<double>(step_), static_cast<double>(cfg_.total_steps));
        return cfg_.lr * 0.5 * (1.0 + std::cos(M_PI * t / static_cast<double>(cfg_.total_steps)));
    }

    // Updates every parameter, or only those accepted by `filter`. Filtered
    // runs leave other parameters untouched (no weight decay either).
    void step(ParamStore& params,
              const std::function<bool(const std::string&)>& filter = nullptr) {
        double lr = current_lr();
        ++step_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (auto& [name, p] : params.all()) {
            if (filter && !filter(name)) continue;
            Tensor g = p.grad_or_zero();
            State& st = state_[name];
            if (st.m.size() != g.size()) {
                st.m = Tensor(g.shape());
                st.v = Tensor(g.shape());
            }
            Tensor& w = p.mutable_value();
            for (int64_t i = 0; i < g.size(); ++i) {
                st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g[i];
                st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                double mhat = st.m[i] / bc1;
                double vhat = st.v[i] / bc2;
                w[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i]);
            }
        }
    }

    int64_t steps_taken() const { return step_; }

private:
    struct State {
        Tensor m, v;
    };
    OptimConfig cfg_;
    std::map<std::string, State> state_;
    int64_t step_ = 0;
};

}  // namespace aquatrack
