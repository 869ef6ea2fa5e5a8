#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rfs/rng.hpp"
#include "rfs/tensor.hpp"

namespace test_helpers {

// Central finite differences against the autodiff gradients. The builder
// must construct the loss graph fresh from the current parameter values.
struct GradCheck {
    double max_rel_err = 0.0;
    int checked = 0;
};

inline GradCheck check_gradients(const std::function<rfs::Tensor()>& build_loss,
                                 std::vector<rfs::Tensor> params, double h = 1e-5) {
    GradCheck result;
    for (auto& p : params) p.zero_grad();
    build_loss().backward();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(p.grad());

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& data = params[pi].data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + h;
            const double up = build_loss().value();
            data[i] = saved - h;
            const double down = build_loss().value();
            data[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double an = analytic[pi][i];
            const double scale = std::max({std::abs(fd), std::abs(an), 1e-3});
            result.max_rel_err = std::max(result.max_rel_err, std::abs(fd - an) / scale);
            ++result.checked;
        }
    }
    return result;
}

// Closed-form chi-square CDF for even degrees of freedom:
// F(x; 2k) = 1 - exp(-x/2) * sum_{i=0}^{k-1} (x/2)^i / i!
inline double chi_square_cdf_even(double x, int dof) {
    if (dof % 2 != 0 || dof < 2) throw rfs::ArgumentError("chi_square_cdf_even: dof must be even");
    if (x <= 0.0) return 0.0;
    const int k = dof / 2;
    double term = 1.0, sum = 1.0;
    for (int i = 1; i < k; ++i) {
        term *= (x / 2.0) / i;
        sum += term;
    }
    return 1.0 - std::exp(-x / 2.0) * sum;
}

// Kolmogorov-Smirnov statistic of samples against a CDF.
inline double ks_statistic(std::vector<double> samples,
                           const std::function<double(double)>& cdf) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
    }
    return d;
}

// One chi-square(dof) draw as a sum of squared standard normals; the
// distributional oracle stays independent of the sampling implementation.
inline double chi_square_draw(int dof, rfs::Rng& rng) {
    double acc = 0.0;
    for (int i = 0; i < dof; ++i) {
        const double z = rng.normal();
        acc += z * z;
    }
    return acc;
}

inline rfs::Tensor random_tensor(std::vector<int> shape, rfs::Rng& rng, bool requires_grad,
                                 double scale = 1.0) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    std::vector<double> data(n);
    for (double& v : data) v = scale * rng.normal();
    return rfs::Tensor::from(std::move(shape), std::move(data), requires_grad);
}

}  // namespace test_helpers
