#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "gfcl/params.hpp"
#include "gfcl/tensor.hpp"

namespace gfcl {

struct AdamConfig {
    double lr = 0.005;
    double weight_decay = 0.0005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// false: classical L2-in-gradient decay (grad += wd * param before the
    /// moment updates). true: decoupled decay applied directly to the weights.
    bool decoupled_decay = false;
    /// Parameters flagged as non-decaying (biases) are skipped unless set.
    bool decay_biases = false;
};

/// Adam with bias correction. Moment buffers are aligned with the ParamSet
/// by index, so the state must be built for the exact parameter set it
/// updates. Parameters absent from the gradient map are left untouched.
class AdamState {
public:
    AdamState() = default;

    AdamState(const ParamSet& params, AdamConfig cfg) : cfg_(cfg) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const Param& p : params) {
            m_.push_back(Tensor::zeros_like(p.value));
            v_.push_back(Tensor::zeros_like(p.value));
        }
    }

    const AdamConfig& config() const { return cfg_; }
    std::uint64_t step_count() const { return t_; }

    void step(ParamSet& params, const GradMap& grads) {
        if (m_.size() != params.size()) {
            throw std::invalid_argument("AdamState::step: state does not match parameter set");
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Param& p = params[i];
            if (!p.trainable) continue;
            const auto it = grads.find(p.name);
            if (it == grads.end()) continue;
            const Tensor& g = it->second;
            if (!g.same_shape(p.value)) {
                throw std::invalid_argument("AdamState::step: gradient shape mismatch for '" +
                                            p.name + "'");
            }
            const bool decay = cfg_.weight_decay != 0.0 && (p.decays || cfg_.decay_biases);
            Tensor& m = m_[i];
            Tensor& v = v_[i];
            for (std::size_t k = 0; k < g.size(); ++k) {
                double gk = g[k];
                if (decay && !cfg_.decoupled_decay) gk += cfg_.weight_decay * p.value[k];
                m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
                v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
                const double m_hat = m[k] / bc1;
                const double v_hat = v[k] / bc2;
                double update = cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
                if (decay && cfg_.decoupled_decay) update += cfg_.lr * cfg_.weight_decay * p.value[k];
                p.value[k] -= update;
            }
        }
    }

private:
    AdamConfig cfg_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::uint64_t t_ = 0;
};

}  // namespace gfcl
