#include "rfs/adam.hpp"

#include <cmath>

namespace rfs {

AdamState::AdamState(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    if (cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 || cfg_.beta2 >= 1.0)
        throw ArgumentError("adam: betas must lie in [0, 1)");
    if (cfg_.learning_rate <= 0.0) throw ArgumentError("adam: learning rate must be positive");
    first_moment_.reserve(params_.size());
    second_moment_.reserve(params_.size());
    for (const auto& p : params_) {
        first_moment_.emplace_back(p.size(), 0.0);
        second_moment_.emplace_back(p.size(), 0.0);
    }
}

void AdamState::step(double lr_override) {
    const double lr = lr_override >= 0.0 ? lr_override : cfg_.learning_rate;
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, step_count_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, step_count_);
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = params_[pi].data();
        const auto& g = params_[pi].grad();
        if (g.size() != p.size()) throw DimensionError("adam: gradient shape mismatch");
        auto& m = first_moment_[pi];
        auto& v = second_moment_[pi];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg_.epsilon) + cfg_.weight_decay * p[i]);
        }
    }
}

void AdamState::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace rfs
