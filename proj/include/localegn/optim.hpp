#pragma once

#include <cmath>
#include <map>
#include <string>

#include "localegn/errors.hpp"
#include "localegn/param_store.hpp"

namespace localegn {

/// Adam with bias correction. Weight decay is coupled: added to the gradient
/// as an L2 term before the moment updates (the classical reading of a
/// stated decay factor; a decoupled mode is available for comparison).
struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0005;
    bool decoupled_decay = false;
};

class AdamState {
public:
    explicit AdamState(const ParameterStore& store) {
        for (const auto& [name, e] : store) {
            m_.emplace(name, Tensor2(e.value.rows(), e.value.cols(), 0.0));
            v_.emplace(name, Tensor2(e.value.rows(), e.value.cols(), 0.0));
        }
    }

    std::size_t step_count() const { return t_; }

    /// One optimization step over every tensor in the store, consuming the
    /// gradients currently in the store's buffers.
    void step(ParameterStore& store, const AdamConfig& cfg) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
        for (auto& [name, e] : store) {
            Tensor2& m = m_.at(name);
            Tensor2& v = v_.at(name);
            double* p = e.value.data();
            const double* g = e.grad.data();
            for (std::size_t i = 0; i < e.value.size(); ++i) {
                double grad = g[i];
                if (!cfg.decoupled_decay) grad += cfg.weight_decay * p[i];
                m.data()[i] = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * grad;
                v.data()[i] = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * grad * grad;
                const double mhat = m.data()[i] / bc1;
                const double vhat = v.data()[i] / bc2;
                p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
                if (cfg.decoupled_decay) p[i] -= cfg.lr * cfg.weight_decay * p[i];
            }
        }
    }

private:
    std::map<std::string, Tensor2> m_, v_;
    std::size_t t_ = 0;
};

} // namespace localegn
