#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "rfs/tensor.hpp"

using namespace rfs;
using test_helpers::check_gradients;
using test_helpers::random_tensor;

TEST_CASE("matmul identity and scalar products") {
    const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    const Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
    CHECK(matmul(eye, b).data() == std::vector<double>{5, 6, 7, 8});
    const Tensor two = Tensor::from({1, 1}, {2});
    const Tensor three = Tensor::from({1, 1}, {3});
    CHECK(matmul(two, three).data() == std::vector<double>{6});
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    const Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor b = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK_THROWS_AS(matmul(a, b), DimensionError);
}

TEST_CASE("matmul gradients match central finite differences") {
    Rng rng(101);
    Tensor a = random_tensor({3, 4}, rng, true);
    Tensor b = random_tensor({4, 2}, rng, true);
    auto build = [&] { return sum_all(matmul(a, b)); };
    const auto res = check_gradients(build, {a, b}, 1e-6);
    CHECK(res.checked == 20);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("cross entropy saturated and uniform rows") {
    CHECK(cross_entropy(Tensor::from({1, 2}, {1000, 0}), {0}).value() ==
          doctest::Approx(0.0).epsilon(1e-9));
    CHECK(cross_entropy(Tensor::from({1, 2}, {0, 0}), {0}).value() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy rejects out-of-range labels") {
    const Tensor logits = Tensor::from({1, 3}, {0.5, 0.1, -0.2});
    CHECK_THROWS_AS(cross_entropy(logits, {3}), LabelError);
    CHECK_THROWS_AS(cross_entropy(logits, {-1}), LabelError);
}

TEST_CASE("cross entropy matches brute-force softmax oracle") {
    Rng rng(102);
    const Tensor logits = random_tensor({4, 3}, rng, false, 2.0);
    const std::vector<int> labels = {2, 0, 1, 1};

    // Oracle: direct softmax + log per row, no shared code path.
    double expected = 0.0;
    for (int i = 0; i < 4; ++i) {
        double denom = 0.0;
        for (int c = 0; c < 3; ++c) denom += std::exp(logits.data()[i * 3 + c]);
        expected += -std::log(std::exp(logits.data()[i * 3 + labels[i]]) / denom);
    }
    expected /= 4.0;
    CHECK(cross_entropy(logits, labels).value() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("cross entropy gradient check") {
    Rng rng(103);
    Tensor logits = random_tensor({3, 5}, rng, true);
    auto build = [&] { return cross_entropy(logits, {1, 4, 0}); };
    CHECK(check_gradients(build, {logits}).max_rel_err < 1e-7);
}

TEST_CASE("soft-target cross entropy reduces to the hard version on one-hots") {
    Rng rng(104);
    const Tensor logits = random_tensor({2, 4}, rng, false);
    const Tensor onehot = Tensor::from({2, 4}, {0, 0, 1, 0, 1, 0, 0, 0});
    CHECK(cross_entropy_soft(logits, onehot).value() ==
          doctest::Approx(cross_entropy(logits, {2, 0}).value()).epsilon(1e-14));
}

TEST_CASE("soft-target cross entropy gradient check") {
    Rng rng(105);
    Tensor logits = random_tensor({2, 4}, rng, true);
    const Tensor target = Tensor::from({2, 4}, {0.2, 0.3, 0.4, 0.1, 0.25, 0.25, 0.25, 0.25});
    auto build = [&] { return cross_entropy_soft(logits, target); };
    CHECK(check_gradients(build, {logits}).max_rel_err < 1e-7);
}

TEST_CASE("kl divergence of identical logits is zero") {
    Rng rng(106);
    const Tensor p = random_tensor({3, 4}, rng, false);
    CHECK(kl_divergence(p, p).value() == 0.0);
}

TEST_CASE("kl divergence matches the direct formula oracle") {
    // One sample: p logits (0, 0), q logits (ln 3, 0).
    const Tensor p = Tensor::from({1, 2}, {0, 0});
    const Tensor q = Tensor::from({1, 2}, {std::log(3.0), 0});
    // Oracle: P = (1/2, 1/2), Q = (3/4, 1/4); KL = sum P*(ln P - ln Q).
    const double expected = 0.5 * (std::log(0.5) - std::log(0.75)) +
                            0.5 * (std::log(0.5) - std::log(0.25));
    CHECK(kl_divergence(p, q).value() == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("kl divergence is non-negative on random logit pairs") {
    Rng rng(107);
    for (int trial = 0; trial < 1000; ++trial) {
        const Tensor p = random_tensor({1, 6}, rng, false, 3.0);
        const Tensor q = random_tensor({1, 6}, rng, false, 3.0);
        CHECK(kl_divergence(p, q).value() >= 0.0);
    }
}

TEST_CASE("kl divergence gradient check, both sides and temperature") {
    Rng rng(108);
    Tensor p = random_tensor({2, 4}, rng, true);
    Tensor q = random_tensor({2, 4}, rng, true);
    auto build1 = [&] { return kl_divergence(p, q); };
    CHECK(check_gradients(build1, {p, q}).max_rel_err < 1e-6);
    auto build2 = [&] { return kl_divergence(p, q, 2.5); };
    CHECK(check_gradients(build2, {p, q}).max_rel_err < 1e-6);
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(109);
    const Tensor logits = random_tensor({6, 9}, rng, false, 10.0);
    const std::vector<double> p = softmax_rows(logits);
    for (int i = 0; i < 6; ++i) {
        double acc = 0.0;
        for (int j = 0; j < 9; ++j) acc += p[i * 9 + j];
        CHECK(std::abs(acc - 1.0) <= 1e-12);
    }
}

TEST_CASE("cross entropy equals kl plus entropy on uniform targets") {
    Rng rng(110);
    const int c = 5;
    const Tensor logits = random_tensor({3, c}, rng, false, 2.0);
    const Tensor uniform_target = Tensor::from({3, c}, std::vector<double>(3 * c, 1.0 / c));
    const Tensor uniform_logits = Tensor::zeros({3, c});
    const double ce = cross_entropy_soft(logits, uniform_target).value();
    const double kl = kl_divergence(uniform_logits, logits).value();
    CHECK(ce == doctest::Approx(kl + std::log(static_cast<double>(c))).epsilon(1e-12));
}

TEST_CASE("elementwise and structural ops pass gradient checks") {
    Rng rng(111);
    Tensor a = random_tensor({3, 4}, rng, true);
    Tensor b = random_tensor({3, 4}, rng, true);
    Tensor v = random_tensor({4}, rng, true);

    auto build_add = [&] { return sum_all(mul(add(a, b), b)); };
    CHECK(check_gradients(build_add, {a, b}).max_rel_err < 1e-6);

    auto build_rowvec = [&] { return sum_all(relu(add_rowvec(a, v))); };
    CHECK(check_gradients(build_rowvec, {a, v}).max_rel_err < 1e-4);

    auto build_structural = [&] {
        const Tensor g = gather_rows(a, {2, 0, 2});
        const Tensor s = slice_cols(g, 1, 3);
        return sum_all(mul(s, s));
    };
    CHECK(check_gradients(build_structural, {a}).max_rel_err < 1e-6);

    auto build_sub_scale = [&] { return scale(sum_all(sub(a, b)), 1.5); };
    CHECK(check_gradients(build_sub_scale, {a, b}).max_rel_err < 1e-6);
}

TEST_CASE("aggregate_rotations forward matches a hand loop and is differentiable") {
    Rng rng(112);
    const int b = 2, c = 3;
    Tensor aug = random_tensor({4 * b, 4 * c}, rng, true);

    const Tensor agg = aggregate_rotations(aug, c);
    for (int i = 0; i < b; ++i)
        for (int cls = 0; cls < c; ++cls) {
            double expected = 0.0;
            for (int j = 0; j < 4; ++j) expected += aug.data()[(4 * i + j) * 4 * c + 4 * cls + j];
            expected *= 0.25;
            CHECK(agg.data()[i * c + cls] == doctest::Approx(expected).epsilon(1e-15));
        }

    auto build = [&] { return sum_all(mul(aggregate_rotations(aug, c),
                                          aggregate_rotations(aug, c))); };
    CHECK(check_gradients(build, {aug}).max_rel_err < 1e-6);

    CHECK_THROWS_AS(aggregate_rotations(random_tensor({5, 12}, rng, false), 3), ProtocolError);
    CHECK_THROWS_AS(aggregate_rotations(random_tensor({8, 10}, rng, false), 3), ProtocolError);
}

TEST_CASE("l2 row norm mean value and gradient") {
    Rng rng(113);
    Tensor a = random_tensor({4, 3}, rng, true);
    double expected = 0.0;
    for (int i = 0; i < 4; ++i) {
        double acc = 0.0;
        for (int j = 0; j < 3; ++j) acc += a.data()[i * 3 + j] * a.data()[i * 3 + j];
        expected += std::sqrt(acc);
    }
    expected /= 4.0;
    CHECK(l2_row_norm_mean(a).value() == doctest::Approx(expected).epsilon(1e-14));

    auto build = [&] { return l2_row_norm_mean(a); };
    CHECK(check_gradients(build, {a}).max_rel_err < 1e-6);
}

TEST_CASE("weighted_sum combines scalars and routes gradients") {
    Rng rng(114);
    Tensor a = random_tensor({2, 2}, rng, true);
    Tensor b = random_tensor({2, 2}, rng, true);
    auto build = [&] {
        return weighted_sum({sum_all(a), sum_all(mul(b, b))}, {1.0, 15.0});
    };
    const double expect = [&] {
        double sa = 0.0, sb = 0.0;
        for (double v : a.data()) sa += v;
        for (double v : b.data()) sb += v * v;
        return sa + 15.0 * sb;
    }();
    CHECK(build().value() == doctest::Approx(expect).epsilon(1e-14));
    CHECK(check_gradients(build, {a, b}).max_rel_err < 1e-6);
}

TEST_CASE("gradients accumulate when a tensor is reused") {
    Tensor x = Tensor::from({1}, {3.0}, true);
    const Tensor y = sum_all(mul(x, x));  // d/dx = 2x = 6
    x.zero_grad();
    y.backward();
    CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward requires a scalar output") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(mul(x, x).backward(), DimensionError);
}
