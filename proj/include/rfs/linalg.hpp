#pragma once

#include <span>
#include <vector>

#include "rfs/errors.hpp"

namespace rfs {

// Square matrices are row-major length dim*dim vectors throughout.

// Lower-triangular Cholesky factor L of a symmetric positive-definite matrix,
// a = L * L^T. Throws NotPositiveDefiniteError on a non-positive pivot.
std::vector<double> cholesky(std::span<const double> a, int dim);

// Solves L * y = b for lower-triangular L.
std::vector<double> forward_solve(std::span<const double> lower, int dim,
                                  std::span<const double> b);

double frobenius_norm(std::span<const double> a);

// c = a * b^T for row-major square matrices (test and reconstruction helper).
std::vector<double> mat_times_transpose(std::span<const double> a,
                                        std::span<const double> b, int dim);

}  // namespace rfs
