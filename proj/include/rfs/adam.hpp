#pragma once

#include <vector>

#include "rfs/errors.hpp"
#include "rfs/tensor.hpp"

namespace rfs {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 2e-4;  // decoupled: applied to parameters directly
    double epsilon = 1e-8;
};

// Adam with decoupled weight decay over a fixed list of parameter tensors.
// Moment buffers mirror the parameter shapes; updates are in place.
class AdamState {
public:
    AdamState(std::vector<Tensor> params, AdamConfig cfg);

    // One bias-corrected update from the parameters' accumulated gradients.
    // lr_override < 0 uses the configured rate (scheduling hook).
    void step(double lr_override = -1.0);

    void zero_grad();

    int step_count() const { return step_count_; }
    const AdamConfig& config() const { return cfg_; }
    const std::vector<Tensor>& params() const { return params_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> first_moment_;
    std::vector<std::vector<double>> second_moment_;
    AdamConfig cfg_;
    int step_count_ = 0;
};

}  // namespace rfs
