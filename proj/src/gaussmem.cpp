#include "rfs/gaussmem.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "rfs/linalg.hpp"

namespace rfs {

namespace {

constexpr double kLn2Pi = 1.8378770664093454835606594728112;

void factorize(ClassStats& s) {
    s.lambda = covariance_regularizer(s.cov, s.dim);
    std::vector<double> reg = s.cov;
    for (int i = 0; i < s.dim; ++i) reg[static_cast<std::size_t>(i) * s.dim + i] += s.lambda;
    s.chol = cholesky(reg, s.dim);
    double acc = 0.0;
    for (int i = 0; i < s.dim; ++i)
        acc += std::log(s.chol[static_cast<std::size_t>(i) * s.dim + i]);
    s.log_det = 2.0 * acc;
}

void write_u32(std::ofstream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ofstream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ofstream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(os, bits);
}

std::uint32_t read_u32(std::ifstream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::ifstream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double read_f64(std::ifstream& is) {
    const std::uint64_t bits = read_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

constexpr std::uint32_t kStatsMagic = 0x53534652;  // "RFSS"

}  // namespace

double covariance_regularizer(std::span<const double> cov, int dim) {
    double trace = 0.0;
    for (int i = 0; i < dim; ++i) trace += cov[static_cast<std::size_t>(i) * dim + i];
    return std::max(1e-6, 1e-4 * trace / dim);
}

ClassStats estimate_class_stats(const Tensor& features, int class_id, int learned_at_task) {
    const int n = features.rows();
    const int m = features.cols();
    if (n < 2)
        throw InsufficientSampleError("estimate_class_stats: need at least 2 samples, got " +
                                      std::to_string(n));
    ClassStats s;
    s.class_id = class_id;
    s.sample_count = n;
    s.learned_at_task = learned_at_task;
    s.dim = m;
    s.mean.assign(m, 0.0);
    const auto& d = features.data();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) s.mean[j] += d[static_cast<std::size_t>(i) * m + j];
    for (double& v : s.mean) v /= n;

    s.cov.assign(static_cast<std::size_t>(m) * m, 0.0);
    std::vector<double> dev(m);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) dev[j] = d[static_cast<std::size_t>(i) * m + j] - s.mean[j];
        for (int r = 0; r < m; ++r) {
            const double dr = dev[r];
            double* row = s.cov.data() + static_cast<std::size_t>(r) * m;
            for (int c = 0; c < m; ++c) row[c] += dr * dev[c];
        }
    }
    for (double& v : s.cov) v /= n;  // population covariance, divide by N
    factorize(s);
    return s;
}

Tensor sample_raw(const ClassStats& stats, int count, Rng& rng) {
    if (stats.dim <= 0 || stats.chol.empty())
        throw ProtocolError("sample_raw: stats not finalized");
    const int m = stats.dim;
    std::vector<double> out(static_cast<std::size_t>(count) * m);
    std::vector<double> eps(m);
    for (int i = 0; i < count; ++i) {
        for (double& e : eps) e = rng.normal();
        double* row = out.data() + static_cast<std::size_t>(i) * m;
        for (int r = 0; r < m; ++r) {
            double acc = stats.mean[r];
            const double* lrow = stats.chol.data() + static_cast<std::size_t>(r) * m;
            for (int c = 0; c <= r; ++c) acc += lrow[c] * eps[c];
            row[r] = acc;
        }
    }
    return Tensor::from({count, m}, std::move(out), false);
}

double squared_mahalanobis(const ClassStats& stats, std::span<const double> x) {
    const int m = stats.dim;
    if (static_cast<int>(x.size()) != m)
        throw DimensionError("squared_mahalanobis: dimension mismatch");
    std::vector<double> dev(m);
    for (int i = 0; i < m; ++i) {
        if (!std::isfinite(x[i])) throw ArgumentError("squared_mahalanobis: non-finite input");
        dev[i] = x[i] - stats.mean[i];
    }
    const std::vector<double> y = forward_solve(stats.chol, m, dev);
    double acc = 0.0;
    for (double v : y) acc += v * v;
    return acc;
}

double log_likelihood(const ClassStats& stats, std::span<const double> x) {
    return -0.5 * (stats.dim * kLn2Pi + stats.log_det + squared_mahalanobis(stats, x));
}

std::vector<double> mgs_sample(const ClassStats& stats, int k, Rng& rng) {
    if (k < 1) throw ArgumentError("mgs_sample: K must be >= 1");
    if (stats.dim <= 0 || stats.chol.empty())
        throw ProtocolError("mgs_sample: stats not finalized");
    const int m = stats.dim;
    // For a candidate mean + L*eps, the log-density is a strictly decreasing
    // function of |eps|^2, so the argmax over the pool is the candidate with
    // the smallest generating noise. Draw order matches sample_raw exactly:
    // m normals per candidate, candidates in index order; ties keep the
    // lowest index.
    std::vector<double> eps(m), best_eps(m);
    double best_sq = 0.0;
    for (int i = 0; i < k; ++i) {
        double sq = 0.0;
        for (int j = 0; j < m; ++j) {
            eps[j] = rng.normal();
            sq += eps[j] * eps[j];
        }
        if (i == 0 || sq < best_sq) {
            best_sq = sq;
            best_eps = eps;
        }
    }
    std::vector<double> out(m);
    for (int r = 0; r < m; ++r) {
        double acc = stats.mean[r];
        const double* lrow = stats.chol.data() + static_cast<std::size_t>(r) * m;
        for (int c = 0; c <= r; ++c) acc += lrow[c] * best_eps[c];
        out[r] = acc;
    }
    return out;
}

std::vector<int> select_old_batch(const std::vector<int>& old_classes, int batch, Rng& rng) {
    if (old_classes.empty())
        throw ProtocolError("select_old_batch: no old classes (task 0 must not call this)");
    if (batch < 1) throw ArgumentError("select_old_batch: batch must be >= 1");
    const int pool = static_cast<int>(old_classes.size());

    auto draw_distinct = [&](int count) {
        std::vector<int> ids = old_classes;
        // Partial Fisher-Yates: the first `count` entries are a uniform
        // without-replacement draw.
        for (int i = 0; i < count; ++i) {
            const int j = i + rng.uniform_int(pool - i);
            std::swap(ids[i], ids[j]);
        }
        ids.resize(count);
        return ids;
    };

    if (batch < pool) return draw_distinct(batch);
    std::vector<int> out = old_classes;
    int remaining = batch - pool;
    while (remaining > 0) {
        const int round = std::min(remaining, pool);
        std::vector<int> extra = round == pool ? old_classes : draw_distinct(round);
        out.insert(out.end(), extra.begin(), extra.end());
        remaining -= round;
    }
    return out;
}

void StatsStore::insert(ClassStats stats) {
    if (stats.dim != feature_dim_)
        throw DimensionError("StatsStore: stats dim " + std::to_string(stats.dim) +
                             " does not match store dim " + std::to_string(feature_dim_));
    if (by_class_.count(stats.class_id))
        throw WriteOnceError("StatsStore: class " + std::to_string(stats.class_id) +
                             " already stored; entries are write-once");
    by_class_.emplace(stats.class_id, std::move(stats));
    ++stamp_;
}

const ClassStats& StatsStore::stats(int class_id) const {
    auto it = by_class_.find(class_id);
    if (it == by_class_.end())
        throw LookupError("StatsStore: unknown class " + std::to_string(class_id));
    return it->second;
}

void StatsStore::rebuild_tied_cache() const {
    // Pooled covariance: sample-count-weighted mean of per-class covariances.
    std::vector<double> pooled(static_cast<std::size_t>(feature_dim_) * feature_dim_, 0.0);
    double total = 0.0;
    for (const auto& [id, s] : by_class_) {
        for (std::size_t i = 0; i < pooled.size(); ++i) pooled[i] += s.sample_count * s.cov[i];
        total += s.sample_count;
    }
    for (double& v : pooled) v /= total;
    tied_cache_.clear();
    for (const auto& [id, s] : by_class_) {
        ClassStats t = s;
        t.cov = pooled;
        std::vector<double> reg = pooled;
        t.lambda = covariance_regularizer(reg, feature_dim_);
        for (int i = 0; i < feature_dim_; ++i)
            reg[static_cast<std::size_t>(i) * feature_dim_ + i] += t.lambda;
        t.chol = cholesky(reg, feature_dim_);
        double acc = 0.0;
        for (int i = 0; i < feature_dim_; ++i)
            acc += std::log(t.chol[static_cast<std::size_t>(i) * feature_dim_ + i]);
        t.log_det = 2.0 * acc;
        tied_cache_.emplace(id, std::move(t));
    }
    tied_cache_stamp_ = stamp_;
}

const ClassStats& StatsStore::sampling_stats(int class_id) const {
    if (!tied_) return stats(class_id);
    if (tied_cache_stamp_ != stamp_) rebuild_tied_cache();
    auto it = tied_cache_.find(class_id);
    if (it == tied_cache_.end())
        throw LookupError("StatsStore: unknown class " + std::to_string(class_id));
    return it->second;
}

std::vector<int> StatsStore::class_ids() const {
    std::vector<int> out;
    out.reserve(by_class_.size());
    for (const auto& [id, s] : by_class_) out.push_back(id);
    return out;
}

double StatsStore::mean_diag_std() const {
    if (by_class_.empty()) throw ProtocolError("mean_diag_std: store is empty");
    double acc = 0.0;
    for (const auto& [id, s] : by_class_) {
        double trace = 0.0;
        for (int i = 0; i < s.dim; ++i) trace += s.cov[static_cast<std::size_t>(i) * s.dim + i];
        acc += trace / s.dim;
    }
    return std::sqrt(acc / static_cast<double>(by_class_.size()));
}

void StatsStore::export_binary(const std::string& path, std::uint64_t config_hash) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("StatsStore: cannot open " + path);
    write_u32(os, kStatsMagic);
    write_u32(os, 1);
    write_u32(os, static_cast<std::uint32_t>(feature_dim_));
    write_u64(os, config_hash);
    write_u32(os, static_cast<std::uint32_t>(by_class_.size()));
    for (const auto& [id, s] : by_class_) {
        write_u32(os, static_cast<std::uint32_t>(id));
        write_u32(os, static_cast<std::uint32_t>(s.sample_count));
        write_u32(os, static_cast<std::uint32_t>(s.learned_at_task));
        for (double v : s.mean) write_f64(os, v);
        for (double v : s.cov) write_f64(os, v);
    }
    if (!os) throw Error("StatsStore: write failed for " + path);
}

StatsStore StatsStore::import_binary(const std::string& path, std::uint64_t* config_hash) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("StatsStore: cannot open " + path);
    if (read_u32(is) != kStatsMagic) throw Error("StatsStore: bad magic in " + path);
    if (read_u32(is) != 1) throw Error("StatsStore: unsupported version");
    const int dim = static_cast<int>(read_u32(is));
    const std::uint64_t hash = read_u64(is);
    if (config_hash) *config_hash = hash;
    const int count = static_cast<int>(read_u32(is));
    StatsStore store(dim);
    for (int e = 0; e < count; ++e) {
        ClassStats s;
        s.dim = dim;
        s.class_id = static_cast<int>(read_u32(is));
        s.sample_count = static_cast<int>(read_u32(is));
        s.learned_at_task = static_cast<int>(read_u32(is));
        s.mean.resize(dim);
        for (double& v : s.mean) v = read_f64(is);
        s.cov.resize(static_cast<std::size_t>(dim) * dim);
        for (double& v : s.cov) v = read_f64(is);
        factorize(s);
        store.insert(std::move(s));
    }
    if (!is) throw Error("StatsStore: truncated file " + path);
    return store;
}

}  // namespace rfs
