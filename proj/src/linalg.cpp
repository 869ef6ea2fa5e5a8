#include "rfs/linalg.hpp"

#include <cmath>

namespace rfs {

std::vector<double> cholesky(std::span<const double> a, int dim) {
    if (static_cast<int>(a.size()) != dim * dim)
        throw DimensionError("cholesky: matrix size does not match dim");
    std::vector<double> l(static_cast<std::size_t>(dim) * dim, 0.0);
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j <= i; ++j) {
            double acc = a[static_cast<std::size_t>(i) * dim + j];
            for (int k = 0; k < j; ++k)
                acc -= l[static_cast<std::size_t>(i) * dim + k] *
                       l[static_cast<std::size_t>(j) * dim + k];
            if (i == j) {
                if (acc <= 0.0 || !std::isfinite(acc))
                    throw NotPositiveDefiniteError(
                        "cholesky: non-positive pivot at row " + std::to_string(i));
                l[static_cast<std::size_t>(i) * dim + j] = std::sqrt(acc);
            } else {
                l[static_cast<std::size_t>(i) * dim + j] =
                    acc / l[static_cast<std::size_t>(j) * dim + j];
            }
        }
    }
    return l;
}

std::vector<double> forward_solve(std::span<const double> lower, int dim,
                                  std::span<const double> b) {
    if (static_cast<int>(b.size()) != dim)
        throw DimensionError("forward_solve: rhs size does not match dim");
    std::vector<double> y(dim, 0.0);
    for (int i = 0; i < dim; ++i) {
        double acc = b[i];
        for (int k = 0; k < i; ++k) acc -= lower[static_cast<std::size_t>(i) * dim + k] * y[k];
        y[i] = acc / lower[static_cast<std::size_t>(i) * dim + i];
    }
    return y;
}

double frobenius_norm(std::span<const double> a) {
    double acc = 0.0;
    for (double v : a) acc += v * v;
    return std::sqrt(acc);
}

std::vector<double> mat_times_transpose(std::span<const double> a,
                                        std::span<const double> b, int dim) {
    std::vector<double> c(static_cast<std::size_t>(dim) * dim, 0.0);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
            double acc = 0.0;
            for (int k = 0; k < dim; ++k)
                acc += a[static_cast<std::size_t>(i) * dim + k] *
                       b[static_cast<std::size_t>(j) * dim + k];
            c[static_cast<std::size_t>(i) * dim + j] = acc;
        }
    return c;
}

}  // namespace rfs
