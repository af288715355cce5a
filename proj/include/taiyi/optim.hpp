#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "taiyi/error.hpp"
#include "taiyi/tensor.hpp"

namespace taiyi {

// Plain gradient descent: theta <- theta - lr * grad, then grads are zeroed.
inline void gd_step(const std::vector<Tensor>& params, double lr) {
    for (const auto& p : params) {
        if (!p.has_grad()) throw Error("gd_step: parameter has no gradient");
    }
    for (const auto& p : params) {
        auto& data = p.values_mut();
        const auto& g = p.grad();
        for (size_t i = 0; i < data.size(); ++i) data[i] -= lr * g[i];
        p.zero_grad();
    }
}

// Adam with bias correction. Moment buffers are keyed by parameter order,
// so the same optimizer instance must see the same parameter list each step.
class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Tensor>& params, double lr) {
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (size_t i = 0; i < params.size(); ++i) {
                m_[i].assign(params[i].numel(), 0.0);
                v_[i].assign(params[i].numel(), 0.0);
            }
        }
        if (m_.size() != params.size()) throw Error("adam: parameter list changed size");
        t_ += 1;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (size_t i = 0; i < params.size(); ++i) {
            if (!params[i].has_grad()) throw Error("adam: parameter has no gradient");
            auto& data = params[i].values_mut();
            const auto& g = params[i].grad();
            for (size_t j = 0; j < data.size(); ++j) {
                m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
                v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
                data[j] -= lr * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + eps_);
            }
            params[i].zero_grad();
        }
    }

private:
    double beta1_, beta2_, eps_;
    uint64_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

enum class OptimizerKind { plain_gd, adam };

inline OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "plain-gd") return OptimizerKind::plain_gd;
    if (name == "adam") return OptimizerKind::adam;
    throw Error("optimizer: unknown kind '" + name + "'");
}

}  // namespace taiyi
