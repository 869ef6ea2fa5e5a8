#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "rfs/metrics.hpp"

using namespace rfs;

namespace {

AccuracyMatrix filled(const std::vector<std::vector<double>>& rows, long denom = 1000) {
    AccuracyMatrix mat(static_cast<int>(rows.size()));
    for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t p = 0; p < rows[t].size(); ++p)
            mat.set(static_cast<int>(t), static_cast<int>(p),
                    std::lround(rows[t][p] * denom), denom);
    return mat;
}

}  // namespace

TEST_CASE("average incremental accuracy is the mean of the overall curve") {
    const AccuracyMatrix mat = filled({{0.90}, {0.80, 0.80}, {0.70, 0.70, 0.70}});
    CHECK(average_incremental_accuracy(mat) == doctest::Approx(0.80).epsilon(1e-12));

    const AccuracyMatrix single = filled({{0.7}});
    CHECK(average_incremental_accuracy(single) == doctest::Approx(0.7));

    const AccuracyMatrix constant = filled({{0.6}, {0.6, 0.6}});
    CHECK(average_incremental_accuracy(constant) == doctest::Approx(0.6));
}

TEST_CASE("final accuracy picks the last phase") {
    const AccuracyMatrix mat = filled({{0.9}, {0.8, 0.8}, {0.7, 0.7, 0.7}});
    CHECK(final_accuracy(mat) == doctest::Approx(0.7));
    // Monotone decline means the final value is the minimum of the curve.
    double min_overall = 1.0;
    for (int t = 0; t < mat.phases(); ++t) min_overall = std::min(min_overall, mat.phase_overall(t));
    CHECK(final_accuracy(mat) == doctest::Approx(min_overall));

    const AccuracyMatrix single = filled({{0.42}});
    CHECK(final_accuracy(single) == doctest::Approx(average_incremental_accuracy(single)));
}

TEST_CASE("average forgetting on the hand example") {
    // task0 per-phase 0.90/0.80/0.70, task1 0.85/0.80, final task excluded.
    AccuracyMatrix mat(3);
    mat.set(0, 0, 90, 100);
    mat.set(1, 0, 80, 100);
    mat.set(2, 0, 70, 100);
    mat.set(1, 1, 85, 100);
    mat.set(2, 1, 80, 100);
    mat.set(2, 2, 95, 100);
    CHECK(average_forgetting(mat) == doctest::Approx(0.125).epsilon(1e-15));
    // Including the final task adds a zero term and rescales.
    CHECK(average_forgetting(mat, true) == doctest::Approx(0.25 / 3.0).epsilon(1e-12));
}

TEST_CASE("non-decreasing curves have zero forgetting") {
    AccuracyMatrix mat(3);
    mat.set(0, 0, 60, 100);
    mat.set(1, 0, 70, 100);
    mat.set(2, 0, 70, 100);
    mat.set(1, 1, 50, 100);
    mat.set(2, 1, 55, 100);
    mat.set(2, 2, 80, 100);
    CHECK(average_forgetting(mat) == 0.0);
}

TEST_CASE("forgetting matches a naive two-loop reference on random matrices") {
    Rng rng(701);
    for (int trial = 0; trial < 30; ++trial) {
        const int phases = 2 + rng.uniform_int(5);
        AccuracyMatrix mat(phases);
        std::vector<std::vector<double>> a(phases);
        for (int t = 0; t < phases; ++t) {
            a[t].resize(t + 1);
            for (int p = 0; p <= t; ++p) {
                const long correct = rng.uniform_int(1001);
                mat.set(t, p, correct, 1000);
                a[t][p] = correct / 1000.0;
            }
        }
        // Reference: explicit peak/final loops.
        double expected = 0.0;
        for (int p = 0; p < phases - 1; ++p) {
            double peak = 0.0;
            for (int t = p; t < phases; ++t) peak = std::max(peak, a[t][p]);
            expected += peak - a[phases - 1][p];
        }
        expected /= (phases - 1);
        CHECK(average_forgetting(mat) == doctest::Approx(expected).epsilon(1e-15));
        CHECK(average_forgetting(mat) >= 0.0);
    }
}

TEST_CASE("forgetting is undefined for a single phase") {
    AccuracyMatrix mat(1);
    mat.set(0, 0, 90, 100);
    CHECK_THROWS_AS(average_forgetting(mat), ProtocolError);
}

TEST_CASE("phase overall equals the size-weighted mean of per-task entries") {
    AccuracyMatrix mat(2);
    mat.set(0, 0, 45, 50);
    mat.set(1, 0, 40, 50);
    mat.set(1, 1, 10, 30);
    const double weighted = (40.0 + 10.0) / (50.0 + 30.0);
    CHECK(mat.phase_overall(1) == doctest::Approx(weighted).epsilon(1e-15));

    double check = 0.0;
    long total = 0;
    for (int p = 0; p <= 1; ++p) {
        long c, n;
        mat.counts(1, p, &c, &n);
        check += static_cast<double>(c);
        total += n;
    }
    CHECK(mat.phase_overall(1) == doctest::Approx(check / total).epsilon(1e-12));
}

TEST_CASE("matrix enforces the lower-triangular index set") {
    AccuracyMatrix mat(3);
    CHECK_THROWS_AS(mat.set(0, 1, 5, 10), ProtocolError);
    CHECK_THROWS_AS(mat.set(3, 0, 5, 10), ProtocolError);
    CHECK_THROWS_AS(mat.set(0, 0, 11, 10), ProtocolError);
    mat.set(0, 0, 5, 10);
    CHECK(mat.at(0, 0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(mat.at(1, 0), ProtocolError);  // not filled yet
    CHECK_FALSE(mat.complete());
    CHECK_THROWS_AS(average_incremental_accuracy(mat), ProtocolError);
}
