#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rfs/rng.hpp"
#include "rfs/tensor.hpp"

namespace rfs {

// Per-class feature statistics: empirical mean, population covariance, and
// the Cholesky factor of the regularized covariance used for sampling and
// likelihood evaluation.
struct ClassStats {
    int class_id = -1;
    int sample_count = 0;
    int learned_at_task = -1;
    int dim = 0;
    std::vector<double> mean;  // m
    std::vector<double> cov;   // m x m, unregularized empirical covariance
    std::vector<double> chol;  // m x m lower factor of cov + lambda*I
    double lambda = 0.0;       // shrinkage actually applied
    double log_det = 0.0;      // of the regularized covariance
};

// Shrinkage keeping the Cholesky precondition: lambda = max(1e-6, 1e-4*tr/m).
double covariance_regularizer(std::span<const double> cov, int dim);

// Mean and divide-by-N covariance of features [N x m]; N >= 2.
ClassStats estimate_class_stats(const Tensor& features, int class_id, int learned_at_task);

// Draws count i.i.d. rows of mean + L*eps, eps standard normal.
Tensor sample_raw(const ClassStats& stats, int count, Rng& rng);

// Standard multivariate normal log-density under the regularized covariance,
// evaluated through the Cholesky factor.
double log_likelihood(const ClassStats& stats, std::span<const double> x);

// Squared Mahalanobis distance under the regularized covariance.
double squared_mahalanobis(const ClassStats& stats, std::span<const double> x);

// Best-of-K sampling: draws K candidates and returns the one with the
// highest log-density; ties break toward the lowest candidate index.
std::vector<double> mgs_sample(const ClassStats& stats, int k, Rng& rng);

// Batch of old-class ids per the three-case rule: B distinct draws when the
// pool is larger, the whole pool when equal, and whole-pool fill rounds plus
// a without-replacement remainder when smaller.
std::vector<int> select_old_batch(const std::vector<int>& old_classes, int batch, Rng& rng);

// Write-once map from class id to finalized statistics.
class StatsStore {
public:
    StatsStore(int feature_dim, bool tied_covariance = false)
        : feature_dim_(feature_dim), tied_(tied_covariance) {}

    void insert(ClassStats stats);
    bool contains(int class_id) const { return by_class_.count(class_id) > 0; }
    const ClassStats& stats(int class_id) const;
    // Per-class stats, or the class mean paired with the pooled covariance
    // when tied mode is on.
    const ClassStats& sampling_stats(int class_id) const;

    std::vector<int> class_ids() const;
    int size() const { return static_cast<int>(by_class_.size()); }
    bool empty() const { return by_class_.empty(); }
    int feature_dim() const { return feature_dim_; }
    bool tied_covariance() const { return tied_; }

    // Noise radius for mean-plus-noise generation: sqrt of the mean diagonal
    // variance over all stored classes.
    double mean_diag_std() const;

    void export_binary(const std::string& path, std::uint64_t config_hash) const;
    static StatsStore import_binary(const std::string& path, std::uint64_t* config_hash = nullptr);

private:
    int feature_dim_;
    bool tied_;
    std::map<int, ClassStats> by_class_;
    mutable std::map<int, ClassStats> tied_cache_;
    mutable int tied_cache_stamp_ = -1;
    int stamp_ = 0;

    void rebuild_tied_cache() const;
};

}  // namespace rfs
