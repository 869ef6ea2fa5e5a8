#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "rfs/gaussmem.hpp"
#include "rfs/linalg.hpp"

using namespace rfs;
using test_helpers::chi_square_cdf_even;
using test_helpers::chi_square_draw;
using test_helpers::ks_statistic;

TEST_CASE("two symmetric points give the divide-by-N moments") {
    const Tensor feats = Tensor::from({2, 2}, {0, 0, 2, 2});
    const ClassStats s = estimate_class_stats(feats, 7, 1);
    CHECK(s.mean == std::vector<double>{1, 1});
    CHECK(s.cov == std::vector<double>{1, 1, 1, 1});
    CHECK(s.class_id == 7);
    CHECK(s.learned_at_task == 1);
    CHECK(s.sample_count == 2);
}

TEST_CASE("repeated points collapse the covariance onto the regularizer") {
    const Tensor feats = Tensor::from({5, 2}, {3, -1, 3, -1, 3, -1, 3, -1, 3, -1});
    const ClassStats s = estimate_class_stats(feats, 0, 0);
    CHECK(s.mean == std::vector<double>{3, -1});
    for (double v : s.cov) CHECK(v == 0.0);
    CHECK(s.lambda == 1e-6);
    for (int i = 0; i < 2; ++i)
        CHECK(s.chol[i * 2 + i] == doctest::Approx(std::sqrt(1e-6)).epsilon(1e-12));
}

TEST_CASE("estimation needs at least two samples") {
    CHECK_THROWS_AS(estimate_class_stats(Tensor::from({1, 3}, {1, 2, 3}), 0, 0),
                    InsufficientSampleError);
}

TEST_CASE("estimator recovers known moments from Monte Carlo draws") {
    // Draw from a known N(mu*, Sigma*) with an independent hand-rolled
    // sampler, then check the estimator against the generator's truth.
    Rng rng(401);
    const int m = 4;
    const std::vector<double> mu_star = {1.0, -2.0, 0.5, 3.0};
    std::vector<double> a(m * m);
    for (double& v : a) v = 0.4 * rng.normal();
    std::vector<double> sigma_star(m * m, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            double acc = i == j ? 0.5 : 0.0;
            for (int k = 0; k < m; ++k) acc += a[i * m + k] * a[j * m + k];
            sigma_star[i * m + j] = acc;
        }
    const std::vector<double> l_star = cholesky(sigma_star, m);

    const int n = 10000;
    std::vector<double> draws(static_cast<std::size_t>(n) * m);
    std::vector<double> eps(m);
    for (int i = 0; i < n; ++i) {
        for (double& e : eps) e = rng.normal();
        for (int r = 0; r < m; ++r) {
            double acc = mu_star[r];
            for (int c = 0; c <= r; ++c) acc += l_star[r * m + c] * eps[c];
            draws[static_cast<std::size_t>(i) * m + r] = acc;
        }
    }
    const ClassStats s = estimate_class_stats(Tensor::from({n, m}, std::move(draws)), 0, 0);
    for (int j = 0; j < m; ++j) CHECK(std::abs(s.mean[j] - mu_star[j]) < 0.1);
    for (int i = 0; i < m * m; ++i) CHECK(std::abs(s.cov[i] - sigma_star[i]) < 0.15);
}

TEST_CASE("degenerate covariance keeps samples near the mean") {
    const Tensor feats = Tensor::from({4, 3}, std::vector<double>(12, 2.0));
    const ClassStats s = estimate_class_stats(feats, 0, 0);  // cov = 0, lambda = 1e-6
    Rng rng(402);
    const Tensor draws = sample_raw(s, 200, rng);
    for (int i = 0; i < 200; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(std::abs(draws.data()[i * 3 + j] - 2.0) < 10.0 * std::sqrt(1e-6));
}

TEST_CASE("sampler matches its stored moments at 50k draws") {
    Rng rng(403);
    const int m = 4;
    std::vector<double> seed_feats(100 * m);
    for (double& v : seed_feats) v = rng.normal();
    const ClassStats s = estimate_class_stats(Tensor::from({100, m}, std::move(seed_feats)), 0, 0);

    const int n = 50000;
    const Tensor draws = sample_raw(s, n, rng);
    std::vector<double> mean(m, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) mean[j] += draws.data()[static_cast<std::size_t>(i) * m + j];
    for (double& v : mean) v /= n;
    std::vector<double> cov(m * m, 0.0);
    for (int i = 0; i < n; ++i)
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c)
                cov[r * m + c] +=
                    (draws.data()[static_cast<std::size_t>(i) * m + r] - mean[r]) *
                    (draws.data()[static_cast<std::size_t>(i) * m + c] - mean[c]);
    for (double& v : cov) v /= n;

    // Regularized covariance is the sampling truth; 3 standard errors.
    std::vector<double> reg = s.cov;
    for (int i = 0; i < m; ++i) reg[i * m + i] += s.lambda;
    for (int j = 0; j < m; ++j) {
        const double se = std::sqrt(reg[j * m + j] / n);
        CHECK(std::abs(mean[j] - s.mean[j]) < 3.0 * se);
    }
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) {
            const double se =
                std::sqrt((reg[r * m + r] * reg[c * m + c] + reg[r * m + c] * reg[r * m + c]) / n);
            CHECK(std::abs(cov[r * m + c] - reg[r * m + c]) < 3.0 * se);
        }
}

TEST_CASE("squared Mahalanobis of draws follows chi-square(m)") {
    Rng rng(404);
    const int m = 4;
    std::vector<double> seed_feats(200 * m);
    for (double& v : seed_feats) v = 0.7 * rng.normal() + 0.3;
    const ClassStats s = estimate_class_stats(Tensor::from({200, m}, std::move(seed_feats)), 0, 0);

    const int n = 50000;
    const Tensor draws = sample_raw(s, n, rng);
    std::vector<double> d2(n);
    for (int i = 0; i < n; ++i)
        d2[i] = squared_mahalanobis(
            s, std::span(draws.data().data() + static_cast<std::size_t>(i) * m, m));
    const double ks = ks_statistic(d2, [m](double x) { return chi_square_cdf_even(x, m); });
    CHECK(ks < 0.02);
}

TEST_CASE("log density of the standard normal at the origin") {
    const Tensor feats = Tensor::from({2, 1}, {-1.0, 1.0});  // mean 0, variance 1
    const ClassStats s = estimate_class_stats(feats, 0, 0);
    CHECK(log_likelihood(s, std::vector<double>{0.0}) ==
          doctest::Approx(-0.9189385332046727).epsilon(1e-3));
}

TEST_CASE("log density peaks at the mean") {
    Rng rng(405);
    const int m = 3;
    std::vector<double> feats(50 * m);
    for (double& v : feats) v = rng.normal();
    const ClassStats s = estimate_class_stats(Tensor::from({50, m}, std::move(feats)), 0, 0);
    const double at_mean = log_likelihood(s, s.mean);
    for (int probe = 0; probe < 1000; ++probe) {
        std::vector<double> x(m);
        for (int j = 0; j < m; ++j) x[j] = s.mean[j] + 2.0 * rng.normal();
        CHECK(log_likelihood(s, x) <= at_mean);
    }
    CHECK_THROWS_AS(
        log_likelihood(s, std::vector<double>{0.0, std::numeric_limits<double>::infinity(), 0.0}),
        ArgumentError);
}

TEST_CASE("log density matches a dense-inverse oracle in three dimensions") {
    Rng rng(406);
    const int m = 3;
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<double> feats(40 * m);
        for (double& v : feats) v = 1.5 * rng.normal() + 0.2;
        const ClassStats s = estimate_class_stats(Tensor::from({40, m}, std::move(feats)), 0, 0);
        std::vector<double> x(m);
        for (double& v : x) v = 2.0 * rng.normal();

        // Oracle: closed-form 3x3 determinant and adjugate inverse of the
        // regularized covariance, then the density formula verbatim.
        std::vector<double> r = s.cov;
        for (int i = 0; i < m; ++i) r[i * m + i] += s.lambda;
        const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) -
                           r[1] * (r[3] * r[8] - r[5] * r[6]) +
                           r[2] * (r[3] * r[7] - r[4] * r[6]);
        double inv[9];
        inv[0] = (r[4] * r[8] - r[5] * r[7]) / det;
        inv[1] = (r[2] * r[7] - r[1] * r[8]) / det;
        inv[2] = (r[1] * r[5] - r[2] * r[4]) / det;
        inv[3] = (r[5] * r[6] - r[3] * r[8]) / det;
        inv[4] = (r[0] * r[8] - r[2] * r[6]) / det;
        inv[5] = (r[2] * r[3] - r[0] * r[5]) / det;
        inv[6] = (r[3] * r[7] - r[4] * r[6]) / det;
        inv[7] = (r[1] * r[6] - r[0] * r[7]) / det;
        inv[8] = (r[0] * r[4] - r[1] * r[3]) / det;
        std::vector<double> dev(m);
        for (int j = 0; j < m; ++j) dev[j] = x[j] - s.mean[j];
        double quad = 0.0;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) quad += dev[i] * inv[i * m + j] * dev[j];
        const double expected =
            -0.5 * (m * std::log(2.0 * 3.14159265358979323846) + std::log(det) + quad);

        CHECK(log_likelihood(s, x) == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("mgs with K=1 is exactly one raw draw") {
    Rng rng(407);
    std::vector<double> feats(30 * 4);
    for (double& v : feats) v = rng.normal();
    const ClassStats s = estimate_class_stats(Tensor::from({30, 4}, std::move(feats)), 0, 0);
    Rng a(55), b(55);
    const std::vector<double> picked = mgs_sample(s, 1, a);
    const Tensor raw = sample_raw(s, 1, b);
    CHECK(picked == raw.data());
}

TEST_CASE("mgs selection maximizes log density over its candidate pool") {
    Rng rng(408);
    std::vector<double> feats(60 * 5);
    for (double& v : feats) v = rng.normal();
    const ClassStats s = estimate_class_stats(Tensor::from({60, 5}, std::move(feats)), 0, 0);
    for (int trial = 0; trial < 30; ++trial) {
        Rng replay = rng;
        const std::vector<double> picked = mgs_sample(s, 100, rng);
        const Tensor pool = sample_raw(s, 100, replay);
        const double picked_ll = log_likelihood(s, picked);
        bool found = false;
        for (int i = 0; i < 100; ++i) {
            std::span<const double> row(pool.data().data() + static_cast<std::size_t>(i) * 5, 5);
            CHECK(log_likelihood(s, row) <= picked_ll);
            if (std::equal(row.begin(), row.end(), picked.begin())) found = true;
        }
        CHECK(found);  // the winner is one of the candidates
    }
}

TEST_CASE("mgs concentrates the selected Mahalanobis distance") {
    Rng rng(409);
    const int m = 8;
    std::vector<double> feats(80 * m);
    for (double& v : feats) v = rng.normal();
    const ClassStats s = estimate_class_stats(Tensor::from({80, m}, std::move(feats)), 0, 0);

    const int trials = 1000;
    double mean_selected = 0.0, mean_raw = 0.0;
    for (int t = 0; t < trials; ++t) {
        mean_selected += squared_mahalanobis(s, mgs_sample(s, 20, rng));
        const Tensor raw = sample_raw(s, 1, rng);
        mean_raw += squared_mahalanobis(s, std::span(raw.data().data(), m));
    }
    mean_selected /= trials;
    mean_raw /= trials;
    CHECK(mean_selected < mean_raw);
}

TEST_CASE("mgs selected distance matches the min-of-K chi-square oracle") {
    // Scaled-down version of the acceptance criterion: m = 8, K = 100.
    Rng rng(410);
    const int m = 8, k = 100, trials = 500;
    std::vector<double> feats(120 * m);
    for (double& v : feats) v = rng.normal();
    const ClassStats s = estimate_class_stats(Tensor::from({120, m}, std::move(feats)), 0, 0);

    double mean_selected = 0.0;
    for (int t = 0; t < trials; ++t)
        mean_selected += squared_mahalanobis(s, mgs_sample(s, k, rng));
    mean_selected /= trials;

    Rng oracle_rng(5410);
    double mean_min = 0.0;
    for (int t = 0; t < trials; ++t) {
        double best = chi_square_draw(m, oracle_rng);
        for (int i = 1; i < k; ++i) best = std::min(best, chi_square_draw(m, oracle_rng));
        mean_min += best;
    }
    mean_min /= trials;

    CHECK(std::abs(mean_selected - mean_min) / mean_min < 0.10);
}

TEST_CASE("old-class batch selection follows the three cases") {
    Rng rng(411);
    std::vector<int> pool;
    for (int i = 0; i < 10; ++i) pool.push_back(i);

    SUBCASE("fewer than the pool: distinct draw") {
        for (int trial = 0; trial < 50; ++trial) {
            const std::vector<int> out = select_old_batch(pool, 4, rng);
            CHECK(out.size() == 4);
            CHECK(std::set<int>(out.begin(), out.end()).size() == 4);
            for (int c : out) CHECK((c >= 0 && c < 10));
        }
    }
    SUBCASE("equal to the pool: exactly the pool") {
        std::vector<int> out = select_old_batch(pool, 10, rng);
        std::sort(out.begin(), out.end());
        CHECK(out == pool);
    }
    SUBCASE("larger than the pool: fill rounds") {
        const std::vector<int> two = {3, 8};
        for (int trial = 0; trial < 20; ++trial) {
            const std::vector<int> out = select_old_batch(two, 5, rng);
            CHECK(out.size() == 5);
            const long c3 = std::count(out.begin(), out.end(), 3);
            const long c8 = std::count(out.begin(), out.end(), 8);
            CHECK(c3 + c8 == 5);
            CHECK(c3 >= 2);  // two full rounds plus one extra
            CHECK(c8 >= 2);
        }
    }
    SUBCASE("empty pool is a protocol error") {
        CHECK_THROWS_AS(select_old_batch({}, 4, rng), ProtocolError);
    }
}

TEST_CASE("stats store entries are write-once") {
    Rng rng(412);
    StatsStore store(3);
    std::vector<double> feats(10 * 3);
    for (double& v : feats) v = rng.normal();
    store.insert(estimate_class_stats(Tensor::from({10, 3}, feats), 5, 0));
    CHECK(store.contains(5));
    CHECK(store.size() == 1);
    CHECK_THROWS_AS(store.insert(estimate_class_stats(Tensor::from({10, 3}, feats), 5, 1)),
                    WriteOnceError);
    CHECK_THROWS_AS(store.stats(9), LookupError);
}

TEST_CASE("stats export and import round-trip moments bit-exactly") {
    Rng rng(413);
    StatsStore store(4);
    for (int cls = 0; cls < 3; ++cls) {
        std::vector<double> feats(20 * 4);
        for (double& v : feats) v = rng.normal() + cls;
        store.insert(estimate_class_stats(Tensor::from({20, 4}, std::move(feats)), cls, cls / 2));
    }
    const std::string path =
        (std::filesystem::temp_directory_path() / "rfs_stats_roundtrip.bin").string();
    store.export_binary(path, 0x1234ABCDULL);
    std::uint64_t hash = 0;
    const StatsStore back = StatsStore::import_binary(path, &hash);
    std::remove(path.c_str());

    CHECK(hash == 0x1234ABCDULL);
    CHECK(back.feature_dim() == 4);
    CHECK(back.size() == 3);
    for (int cls = 0; cls < 3; ++cls) {
        CHECK(back.stats(cls).mean == store.stats(cls).mean);
        CHECK(back.stats(cls).cov == store.stats(cls).cov);
        CHECK(back.stats(cls).sample_count == store.stats(cls).sample_count);
        CHECK(back.stats(cls).learned_at_task == store.stats(cls).learned_at_task);
    }
}

TEST_CASE("tied covariance mode pools the per-class covariances") {
    Rng rng(414);
    StatsStore store(2, true);
    std::vector<double> f1 = {0, 0, 2, 0, 4, 0, 6, 0};   // variance along x only
    std::vector<double> f2 = {0, 0, 0, 2, 0, 4, 0, 6};   // variance along y only
    store.insert(estimate_class_stats(Tensor::from({4, 2}, f1), 0, 0));
    store.insert(estimate_class_stats(Tensor::from({4, 2}, f2), 1, 0));

    const ClassStats& tied0 = store.sampling_stats(0);
    const ClassStats& tied1 = store.sampling_stats(1);
    CHECK(tied0.cov == tied1.cov);  // shared pooled covariance
    CHECK(tied0.mean == store.stats(0).mean);
    CHECK(tied1.mean == store.stats(1).mean);
    for (int i = 0; i < 4; ++i)
        CHECK(tied0.cov[i] ==
              doctest::Approx(0.5 * (store.stats(0).cov[i] + store.stats(1).cov[i])));
    // Per-class mode is untouched.
    StatsStore untied(2, false);
    untied.insert(estimate_class_stats(Tensor::from({4, 2}, f1), 0, 0));
    CHECK(untied.sampling_stats(0).cov == untied.stats(0).cov);
}
