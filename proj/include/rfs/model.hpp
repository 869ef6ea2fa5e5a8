#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rfs/rng.hpp"
#include "rfs/synthdata.hpp"
#include "rfs/tensor.hpp"

namespace rfs {

// Two-hidden-layer MLP: input n^2 -> hidden -> hidden -> feature, ReLU
// between layers, linear output.
struct FeatureExtractor {
    int input_dim = 0;
    int hidden_dim = 0;
    int feature_dim = 0;
    Tensor w1, b1, w2, b2, w3, b3;

    static FeatureExtractor init(int input_dim, int hidden_dim, int feature_dim, Rng& rng,
                                 bool trainable = true);

    // x: [B x input_dim] -> [B x feature_dim]
    Tensor forward(const Tensor& x) const;
    std::vector<Tensor> parameters() const;
    FeatureExtractor frozen_copy() const;
};

// Unified head over all classes seen so far plus a per-task head over the
// 4x rotation-augmented label space. Heads are bias-free linear maps unless
// configured otherwise; new unified columns use a centered uniform init with
// standard deviation gain/sqrt(m).
struct DualHead {
    int feature_dim = 0;
    bool use_bias = false;
    double init_gain = 1.0;
    int seen_classes = 0;
    int current_task_classes = 0;
    Tensor unified_w;  // [m x seen_classes]
    Tensor unified_b;  // [seen_classes] when use_bias
    Tensor aug_w;      // [m x 4*current_task_classes]
    Tensor aug_b;

    static DualHead init(int feature_dim, bool use_bias, double init_gain);

    Tensor unified_logits(const Tensor& features) const;
    Tensor aug_logits(const Tensor& features) const;

    // Appends new_class_count columns to the unified head; existing columns
    // are preserved bit-exactly. A count of zero leaves the head unchanged.
    void expand_unified(int new_class_count, Rng& rng);
    // Fresh augmented head for a task of task_class_count classes.
    void reset_aug(int task_class_count, Rng& rng);

    std::vector<Tensor> parameters() const;
};

struct Model {
    FeatureExtractor extractor;
    DualHead head;

    std::vector<Tensor> parameters() const;
    // Flattens images to a [count x n^2] constant tensor.
    static Tensor batch_from_images(const std::vector<const Image*>& images);
};

// Frozen deep copy of the extractor and the unified head, captured at the
// start of each incremental task before head expansion.
struct ModelSnapshot {
    FeatureExtractor extractor;
    Tensor unified_w;
    Tensor unified_b;
    bool use_bias = false;
    int seen_classes = 0;

    Tensor features(const Tensor& x) const { return extractor.forward(x); }
    Tensor unified_logits(const Tensor& features) const;
};

ModelSnapshot snapshot(const Model& model);

// FNV-1a over all parameter bytes; snapshot immutability checks.
std::uint64_t parameter_hash(const std::vector<Tensor>& params);

struct CheckpointMeta {
    int task_index = 0;
    int seen_classes = 0;
    std::uint64_t config_hash = 0;
};

// Self-describing key/value checkpoint: named parameters with shapes and
// little-endian 64-bit payloads plus a metadata block.
void save_checkpoint(const std::string& path, const Model& model, const CheckpointMeta& meta);
struct LoadedCheckpoint {
    Model model;
    CheckpointMeta meta;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace rfs
