#include "rfs/compensate.hpp"

#include <cmath>

namespace rfs {

namespace {

std::vector<int> argmax_cols(const Tensor& sim) {
    const int rows = sim.rows(), cols = sim.cols();
    std::vector<int> out(rows, 0);
    for (int i = 0; i < rows; ++i) {
        const double* row = sim.data().data() + static_cast<std::size_t>(i) * cols;
        int best = 0;
        for (int j = 1; j < cols; ++j)
            if (row[j] > row[best]) best = j;
        out[i] = best;
    }
    return out;
}

std::vector<int> argmin_cols(const Tensor& sim) {
    const int rows = sim.rows(), cols = sim.cols();
    std::vector<int> out(rows, 0);
    for (int i = 0; i < rows; ++i) {
        const double* row = sim.data().data() + static_cast<std::size_t>(i) * cols;
        int best = 0;
        for (int j = 1; j < cols; ++j)
            if (row[j] < row[best]) best = j;
        out[i] = best;
    }
    return out;
}

Tensor rowwise_mix(const Tensor& f_old, const Tensor& f_new, const std::vector<int>& match,
                   const std::vector<double>& old_weight) {
    const int b = f_old.rows(), m = f_old.cols();
    std::vector<double> out(f_old.size());
    for (int i = 0; i < b; ++i) {
        const double* o = f_old.data().data() + static_cast<std::size_t>(i) * m;
        const double* n = f_new.data().data() + static_cast<std::size_t>(match[i]) * m;
        const double w = old_weight[i];
        double* dst = out.data() + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) dst[j] = w * o[j] + (1.0 - w) * n[j];
    }
    return Tensor::from({b, m}, std::move(out), false);
}

}  // namespace

Generation parse_generation(const std::string& name) {
    if (name == "prototype") return Generation::prototype;
    if (name == "prototype_mixing") return Generation::prototype_mixing;
    if (name == "gaussian_noise_aug") return Generation::gaussian_noise_aug;
    if (name == "mgs") return Generation::mgs;
    throw ArgumentError("unknown generation strategy '" + name + "'");
}

Compensation parse_compensation(const std::string& name) {
    if (name == "none") return Compensation::none;
    if (name == "rand_interp") return Compensation::rand_interp;
    if (name == "rand_avg") return Compensation::rand_avg;
    if (name == "least_sim_avg") return Compensation::least_sim_avg;
    if (name == "sfc") return Compensation::sfc;
    throw ArgumentError("unknown compensation strategy '" + name + "'");
}

std::string to_string(Generation g) {
    switch (g) {
        case Generation::prototype: return "prototype";
        case Generation::prototype_mixing: return "prototype_mixing";
        case Generation::gaussian_noise_aug: return "gaussian_noise_aug";
        case Generation::mgs: return "mgs";
    }
    throw ArgumentError("bad generation enum");
}

std::string to_string(Compensation c) {
    switch (c) {
        case Compensation::none: return "none";
        case Compensation::rand_interp: return "rand_interp";
        case Compensation::rand_avg: return "rand_avg";
        case Compensation::least_sim_avg: return "least_sim_avg";
        case Compensation::sfc: return "sfc";
    }
    throw ArgumentError("bad compensation enum");
}

GeneratedBatch generate(const StrategyConfig& cfg, const StatsStore& store,
                        const std::vector<int>& y_old, int unified_width, Rng& rng) {
    if (store.empty()) throw ProtocolError("generate: stats store is empty");
    const int b = static_cast<int>(y_old.size());
    const int m = store.feature_dim();
    GeneratedBatch out;
    out.labels = y_old;

    std::vector<double> rows(static_cast<std::size_t>(b) * m);
    auto put_row = [&](int i, const double* src) {
        std::copy_n(src, m, rows.data() + static_cast<std::size_t>(i) * m);
    };

    switch (cfg.generation) {
        case Generation::prototype: {
            for (int i = 0; i < b; ++i) put_row(i, store.stats(y_old[i]).mean.data());
            break;
        }
        case Generation::gaussian_noise_aug: {
            const double sigma = cfg.noise_scale >= 0.0 ? cfg.noise_scale : store.mean_diag_std();
            for (int i = 0; i < b; ++i) {
                const auto& mu = store.stats(y_old[i]).mean;
                double* dst = rows.data() + static_cast<std::size_t>(i) * m;
                for (int j = 0; j < m; ++j) dst[j] = mu[j] + sigma * rng.normal();
            }
            break;
        }
        case Generation::prototype_mixing: {
            const std::vector<int> ids = store.class_ids();
            std::vector<double> targets(static_cast<std::size_t>(b) * unified_width, 0.0);
            for (int i = 0; i < b; ++i) {
                const int a = y_old[i];
                int other = a;
                if (ids.size() > 1) {
                    // uniform over the other stored classes
                    int pick = rng.uniform_int(static_cast<int>(ids.size()) - 1);
                    other = ids[pick] == a ? ids.back() : ids[pick];
                }
                const double lam = rng.uniform();
                const auto& mu_a = store.stats(a).mean;
                const auto& mu_b = store.stats(other).mean;
                double* dst = rows.data() + static_cast<std::size_t>(i) * m;
                for (int j = 0; j < m; ++j) dst[j] = lam * mu_a[j] + (1.0 - lam) * mu_b[j];
                if (a < 0 || a >= unified_width || other < 0 || other >= unified_width)
                    throw LookupError("generate: class id outside unified label space");
                double* trow = targets.data() + static_cast<std::size_t>(i) * unified_width;
                trow[a] += lam;
                trow[other] += 1.0 - lam;
            }
            out.soft_targets = Tensor::from({b, unified_width}, std::move(targets), false);
            break;
        }
        case Generation::mgs: {
            for (int i = 0; i < b; ++i) {
                const std::vector<double> f =
                    mgs_sample(store.sampling_stats(y_old[i]), cfg.mgs_candidates, rng);
                put_row(i, f.data());
            }
            break;
        }
    }
    out.features = Tensor::from({b, m}, std::move(rows), false);
    return out;
}

Tensor cosine_similarity_matrix(const Tensor& f_old, const Tensor& f_new,
                                long* zero_norm_pairs) {
    const int b = f_old.rows(), m = f_old.cols();
    if (f_new.cols() != m)
        throw DimensionError("cosine_similarity_matrix: feature dims differ");
    const int bn = f_new.rows();

    auto row_norms = [m](const Tensor& t) {
        std::vector<double> norms(t.rows());
        for (int i = 0; i < t.rows(); ++i) {
            const double* row = t.data().data() + static_cast<std::size_t>(i) * m;
            double acc = 0.0;
            for (int j = 0; j < m; ++j) acc += row[j] * row[j];
            norms[i] = std::sqrt(acc);
        }
        return norms;
    };
    const std::vector<double> no = row_norms(f_old);
    const std::vector<double> nn = row_norms(f_new);

    std::vector<double> sim(static_cast<std::size_t>(b) * bn, 0.0);
    long zeroed = 0;
    for (int i = 0; i < b; ++i) {
        const double* oi = f_old.data().data() + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < bn; ++j) {
            if (no[i] == 0.0 || nn[j] == 0.0) {
                ++zeroed;  // similarity defined as 0 for degenerate rows
                continue;
            }
            const double* nj = f_new.data().data() + static_cast<std::size_t>(j) * m;
            double dot = 0.0;
            for (int k = 0; k < m; ++k) dot += oi[k] * nj[k];
            sim[static_cast<std::size_t>(i) * bn + j] = dot / (no[i] * nn[j]);
        }
    }
    if (zero_norm_pairs) *zero_norm_pairs += zeroed;
    return Tensor::from({b, bn}, std::move(sim), false);
}

SynthesisBatch sfc_compensate(const Tensor& f_old, const std::vector<int>& y_old,
                              const Tensor& f_new_rotated) {
    SynthesisBatch out;
    out.strategy = to_string(Compensation::sfc);
    out.old_features = f_old;
    out.labels = y_old;
    const Tensor sim = cosine_similarity_matrix(f_old, f_new_rotated, &out.zero_norm_pairs);
    out.matched_index = argmax_cols(sim);
    out.compensated = rowwise_mix(f_old, f_new_rotated, out.matched_index,
                                  std::vector<double>(y_old.size(), 0.5));
    return out;
}

SynthesisBatch compensate(const StrategyConfig& cfg, const Tensor& f_old,
                          const std::vector<int>& y_old, const Tensor& f_new_rotated,
                          Rng& rng) {
    if (static_cast<int>(y_old.size()) != f_old.rows())
        throw DimensionError("compensate: label count must match feature rows");
    const int b = f_old.rows();

    switch (cfg.compensation) {
        case Compensation::none: {
            SynthesisBatch out;
            out.strategy = to_string(cfg.compensation);
            out.old_features = f_old;
            out.labels = y_old;
            out.compensated = f_old;
            out.matched_index.assign(b, -1);
            return out;
        }
        case Compensation::sfc:
            return sfc_compensate(f_old, y_old, f_new_rotated);
        case Compensation::least_sim_avg: {
            SynthesisBatch out;
            out.strategy = to_string(cfg.compensation);
            out.old_features = f_old;
            out.labels = y_old;
            const Tensor sim =
                cosine_similarity_matrix(f_old, f_new_rotated, &out.zero_norm_pairs);
            out.matched_index = argmin_cols(sim);
            out.compensated = rowwise_mix(f_old, f_new_rotated, out.matched_index,
                                          std::vector<double>(b, 0.5));
            return out;
        }
        case Compensation::rand_avg:
        case Compensation::rand_interp: {
            SynthesisBatch out;
            out.strategy = to_string(cfg.compensation);
            out.old_features = f_old;
            out.labels = y_old;
            out.matched_index.resize(b);
            std::vector<double> weights(b, 0.5);
            for (int i = 0; i < b; ++i) {
                out.matched_index[i] = rng.uniform_int(f_new_rotated.rows());
                if (cfg.compensation == Compensation::rand_interp) weights[i] = rng.uniform();
            }
            out.compensated = rowwise_mix(f_old, f_new_rotated, out.matched_index, weights);
            return out;
        }
    }
    throw ArgumentError("bad compensation enum");
}

}  // namespace rfs
