#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rfs/adam.hpp"
#include "rfs/compensate.hpp"
#include "rfs/gaussmem.hpp"
#include "rfs/metrics.hpp"
#include "rfs/model.hpp"
#include "rfs/synthdata.hpp"

namespace rfs {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 128;
    double learning_rate = 1e-3;
    std::vector<int> milestones = {14, 27};  // epochs at which lr is cut by lr_decay
    double lr_decay = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 2e-4;
    double adam_epsilon = 1e-8;

    double alpha = 15.0;  // weight of the old-class loss block
    StrategyConfig strategy;
    bool feature_kd = true;
    bool logit_kd = true;
    double kd_temperature = 1.0;

    // Test hook: when false, old-class synthesis still consumes the same
    // randomness but none of the old losses enter the objective.
    bool compute_old_loss = true;

    void validate() const;
};

struct LossBreakdown {
    double new_cls = 0.0;
    double new_aug_cls = 0.0;
    double new_ka = 0.0;
    double old_cls = 0.0;
    double old_feat_kd = 0.0;
    double old_logit_kd = 0.0;
    double total = 0.0;
};

struct EpochLog {
    int epoch = 0;
    double learning_rate = 0.0;
    LossBreakdown mean;  // component means over the epoch's steps
    int steps = 0;
    long zero_norm_pairs = 0;
};

// Labels are unified-head column indices throughout the engine.
struct TaskBatchView {
    std::vector<const Image*> images;
    std::vector<int> labels;
};

// Rotation-augmented labels: sample with task-local class y and rotation j
// gets label y*4 + j. Input labels are unified indices of the current task.
std::vector<int> augment_labels(const std::vector<int>& unified_labels, int classes_before,
                                int task_class_count);

// KL between the rotation-aggregated augmented-head distribution and the
// unified-head distribution restricted to the current task's columns.
Tensor aggregation_loss(const Tensor& aug_logits, const Tensor& unified_logits,
                        int classes_before, int task_class_count);

// Mean Euclidean distance between live and snapshot features of the rotated
// batch; the snapshot side carries no gradient.
Tensor feature_distill(const FeatureExtractor& live, const ModelSnapshot& snap,
                       const Tensor& rotated_batch);

// KL from the live unified head (restricted to the snapshot's classes) to the
// snapshot head on the compensated batch; snapshot detached.
Tensor logit_distill(const DualHead& live, const ModelSnapshot& snap,
                     const Tensor& compensated, double temperature);

struct EvalResult {
    std::vector<std::pair<long, long>> per_task;  // (correct, total) for tasks 0..t
    long correct = 0;
    long total = 0;
    std::vector<long> confusion;  // seen x seen, row = true class, col = predicted

    double overall() const { return static_cast<double>(correct) / total; }
};

class Trainer {
public:
    Trainer(Model& model, StatsStore& store, TrainConfig cfg, Rng& rng);

    // Runs the per-task optimization. The unified head must already be
    // expanded for this task and a snapshot captured when task_index >= 1.
    std::vector<EpochLog> train_task(int task_index, const TaskBatchView& train,
                                     int classes_before, int task_class_count,
                                     const ModelSnapshot* snap);

    // Estimates and stores feature statistics for the classes of the task
    // just trained; previously stored classes are untouched.
    void finalize_task(int task_index, const TaskBatchView& train, int classes_before,
                       int task_class_count);

    // Top-1 accuracy with the 0-degree view and the unified head only.
    EvalResult evaluate(const std::vector<TaskBatchView>& per_task_test) const;

private:
    Model& model_;
    StatsStore& store_;
    TrainConfig cfg_;
    Rng& rng_;

    LossBreakdown train_step(const TaskBatchView& batch, int task_index, int classes_before,
                             int task_class_count, const ModelSnapshot* snap,
                             AdamState& opt, double lr, long* zero_norm_pairs);
};

}  // namespace rfs
