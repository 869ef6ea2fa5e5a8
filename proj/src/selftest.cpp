#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include "rfs/compensate.hpp"
#include "rfs/driver.hpp"
#include "rfs/engine.hpp"
#include "rfs/gaussmem.hpp"
#include "rfs/linalg.hpp"
#include "rfs/metrics.hpp"
#include "rfs/synthdata.hpp"

namespace rfs {

namespace {

bool run_check(const char* name, const std::function<bool()>& fn, bool* all_ok) {
    bool ok = false;
    std::string detail;
    try {
        ok = fn();
    } catch (const std::exception& e) {
        detail = e.what();
    }
    std::printf("%-44s %s%s%s\n", name, ok ? "PASS" : "FAIL", detail.empty() ? "" : " -- ",
                detail.c_str());
    if (!ok) *all_ok = false;
    return ok;
}

bool check_rotation_group() {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        Image img;
        img.side = 8;
        img.pixels.resize(64);
        for (double& p : img.pixels) p = rng.uniform();
        const Image back = rotate90(rotate90(rotate90(rotate90(img, 1), 1), 1), 1);
        if (back.pixels != img.pixels) return false;
        if (rotate90(rotate90(img, 1), 3).pixels != img.pixels) return false;
    }
    return true;
}

bool check_task_split() {
    const TaskStream ts = split_tasks(20, 10, 2, 5, 3);
    std::vector<bool> seen(20, false);
    for (const auto& task : ts.tasks)
        for (int c : task) {
            if (seen[c]) return false;
            seen[c] = true;
        }
    for (bool s : seen)
        if (!s) return false;
    return ts.tasks[0].size() == 10 && ts.tasks[3].size() == 2;
}

bool check_cholesky_roundtrip() {
    Rng rng(5);
    const int m = 8;
    std::vector<double> mat(m * m);
    for (double& v : mat) v = rng.normal();
    std::vector<double> spd(m * m, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            double acc = i == j ? 1.0 : 0.0;
            for (int k = 0; k < m; ++k) acc += mat[k * m + i] * mat[k * m + j];
            spd[i * m + j] = acc;
        }
    const std::vector<double> l = cholesky(spd, m);
    const std::vector<double> rec = mat_times_transpose(l, l, m);
    std::vector<double> diff(rec.size());
    for (std::size_t i = 0; i < rec.size(); ++i) diff[i] = rec[i] - spd[i];
    return frobenius_norm(diff) / frobenius_norm(spd) < 1e-10;
}

bool check_adam_first_step() {
    Tensor w = Tensor::from({1}, {0.0}, true);
    AdamConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.0;
    AdamState opt({w}, cfg);
    w.node_->ensure_grad();
    w.node_->grad[0] = 1.0;
    opt.step();
    return std::abs(w.value() + 0.1) < 1e-8;
}

bool check_kl_nonnegative() {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> p(6), q(6);
        for (double& v : p) v = 4.0 * rng.normal();
        for (double& v : q) v = 4.0 * rng.normal();
        const Tensor tp = Tensor::from({1, 6}, p);
        const Tensor tq = Tensor::from({1, 6}, q);
        if (kl_divergence(tp, tq).value() < 0.0) return false;
        if (kl_divergence(tp, tp).value() != 0.0) return false;
    }
    return true;
}

bool check_softmax_rows() {
    Rng rng(23);
    std::vector<double> z(5 * 7);
    for (double& v : z) v = 10.0 * rng.normal();
    const std::vector<double> p = softmax_rows(Tensor::from({5, 7}, z));
    for (int i = 0; i < 5; ++i) {
        double acc = 0.0;
        for (int j = 0; j < 7; ++j) acc += p[i * 7 + j];
        if (std::abs(acc - 1.0) > 1e-12) return false;
    }
    return true;
}

bool check_mgs_argmax() {
    Rng rng(31);
    const int m = 6;
    std::vector<double> feats(40 * m);
    for (double& v : feats) v = rng.normal();
    const ClassStats stats = estimate_class_stats(Tensor::from({40, m}, feats), 0, 0);
    for (int trial = 0; trial < 20; ++trial) {
        Rng replay = rng;  // same stream: recover the candidate pool
        const std::vector<double> picked = mgs_sample(stats, 64, rng);
        const Tensor pool = sample_raw(stats, 64, replay);
        const double picked_ll = log_likelihood(stats, picked);
        for (int i = 0; i < 64; ++i) {
            std::span<const double> row(pool.data().data() + static_cast<std::size_t>(i) * m, m);
            if (log_likelihood(stats, row) > picked_ll) return false;
        }
    }
    return true;
}

bool check_select_old_batch() {
    Rng rng(41);
    const std::vector<int> pool = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    const std::vector<int> small = select_old_batch(pool, 4, rng);
    std::set<int> distinct(small.begin(), small.end());
    if (small.size() != 4 || distinct.size() != 4) return false;
    std::vector<int> exact = select_old_batch(pool, 10, rng);
    std::sort(exact.begin(), exact.end());
    if (exact != pool) return false;
    const std::vector<int> two = {0, 1};
    const std::vector<int> overfull = select_old_batch(two, 5, rng);
    if (overfull.size() != 5) return false;
    return std::count(overfull.begin(), overfull.end(), 0) >= 1 &&
           std::count(overfull.begin(), overfull.end(), 1) >= 1;
}

bool check_sfc_midpoint() {
    Rng rng(43);
    std::vector<double> fo(3 * 5), fn(12 * 5);
    for (double& v : fo) v = rng.normal();
    for (double& v : fn) v = rng.normal();
    const SynthesisBatch sb = sfc_compensate(Tensor::from({3, 5}, fo), {0, 1, 2},
                                             Tensor::from({12, 5}, fn));
    for (int i = 0; i < 3; ++i) {
        double d_old = 0.0, d_new = 0.0;
        for (int j = 0; j < 5; ++j) {
            const double com = sb.compensated.data()[i * 5 + j];
            const double o = fo[i * 5 + j];
            const double n = fn[sb.matched_index[i] * 5 + j];
            d_old += (com - o) * (com - o);
            d_new += (com - n) * (com - n);
        }
        if (std::abs(std::sqrt(d_old) - std::sqrt(d_new)) > 1e-12) return false;
    }
    return true;
}

bool check_metrics_hand_examples() {
    AccuracyMatrix mat(3);
    mat.set(0, 0, 90, 100);
    mat.set(1, 0, 80, 100);
    mat.set(2, 0, 70, 100);
    mat.set(1, 1, 85, 100);
    mat.set(2, 1, 80, 100);
    mat.set(2, 2, 100, 100);
    if (std::abs(average_forgetting(mat) - 0.125) > 1e-15) return false;

    AccuracyMatrix flat(3);
    flat.set(0, 0, 90, 100);
    flat.set(1, 0, 80, 100);
    flat.set(1, 1, 80, 100);
    flat.set(2, 0, 70, 100);
    flat.set(2, 1, 70, 100);
    flat.set(2, 2, 70, 100);
    return std::abs(average_incremental_accuracy(flat) - 0.8) < 1e-15;
}

bool check_micro_run_additivity() {
    Config cfg = Config::defaults();
    cfg.set("data.classes", "4");
    cfg.set("data.train_per_class", "12");
    cfg.set("data.test_per_class", "4");
    cfg.set("tasks.B", "2");
    cfg.set("tasks.C", "1");
    cfg.set("tasks.T", "2");
    cfg.set("model.hidden", "16");
    cfg.set("model.feature_dim", "8");
    cfg.set("train.epochs", "2");
    cfg.set("train.batch", "8");
    cfg.set("train.milestones", "");
    cfg.set("mgs.K", "16");
    const RunRecord a = execute_run(cfg, 0);
    const RunRecord b = execute_run(cfg, 0);
    if (!same_results(a, b)) return false;
    for (const auto& task_log : a.loss_log)
        for (const EpochLog& e : task_log) {
            const LossBreakdown& m = e.mean;
            const double recomposed =
                m.new_cls + m.new_aug_cls + m.new_ka +
                15.0 * (m.old_cls + m.old_feat_kd + m.old_logit_kd);
            if (std::abs(recomposed - m.total) > 1e-9) return false;
        }
    return true;
}

}  // namespace

bool selftest() {
    bool all_ok = true;
    run_check("rotation group identity", check_rotation_group, &all_ok);
    run_check("task split disjoint cover", check_task_split, &all_ok);
    run_check("cholesky reconstruction", check_cholesky_roundtrip, &all_ok);
    run_check("adam first-step identity", check_adam_first_step, &all_ok);
    run_check("kl non-negative", check_kl_nonnegative, &all_ok);
    run_check("softmax rows normalized", check_softmax_rows, &all_ok);
    run_check("mgs argmax over candidates", check_mgs_argmax, &all_ok);
    run_check("old-batch selection cases", check_select_old_batch, &all_ok);
    run_check("sfc midpoint identity", check_sfc_midpoint, &all_ok);
    run_check("metric hand examples", check_metrics_hand_examples, &all_ok);
    run_check("micro run determinism + additivity", check_micro_run_additivity, &all_ok);
    return all_ok;
}

}  // namespace rfs
