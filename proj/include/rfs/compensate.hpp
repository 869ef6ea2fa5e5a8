#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rfs/gaussmem.hpp"
#include "rfs/rng.hpp"
#include "rfs/tensor.hpp"

namespace rfs {

enum class Generation { prototype, prototype_mixing, gaussian_noise_aug, mgs };
enum class Compensation { none, rand_interp, rand_avg, least_sim_avg, sfc };

Generation parse_generation(const std::string& name);
Compensation parse_compensation(const std::string& name);
std::string to_string(Generation g);
std::string to_string(Compensation c);

struct StrategyConfig {
    Generation generation = Generation::mgs;
    Compensation compensation = Compensation::sfc;
    int mgs_candidates = 1000;
    // < 0 selects the default radius: sqrt of the mean diagonal variance
    // across all stored classes.
    double noise_scale = -1.0;

    std::string label() const { return to_string(generation) + "+" + to_string(compensation); }
};

// Old-class feature batch from the configured generation strategy. Labels
// are echoed back; prototype mixing additionally carries soft targets over
// the unified label space.
struct GeneratedBatch {
    Tensor features;          // [B x m], constant
    std::vector<int> labels;  // y_old
    std::optional<Tensor> soft_targets;  // [B x unified_width]
};

GeneratedBatch generate(const StrategyConfig& cfg, const StatsStore& store,
                        const std::vector<int>& y_old, int unified_width, Rng& rng);

// S[i][j] = cos(F_old_i, F_new_j) in [-1, 1]; a zero-norm row on either side
// yields similarity 0 for its pairs, counted in zero_norm_pairs when given.
Tensor cosine_similarity_matrix(const Tensor& f_old, const Tensor& f_new,
                                long* zero_norm_pairs = nullptr);

struct SynthesisBatch {
    Tensor old_features;        // F_old as generated
    std::vector<int> labels;    // y_old, never altered by compensation
    Tensor compensated;         // F_old_com
    std::string strategy;       // provenance
    std::vector<int> matched_index;  // per-row j*, -1 when no matching occurred
    long zero_norm_pairs = 0;
};

// Per row, the most cosine-similar new feature is averaged elementwise with
// the old feature; ties break toward the lowest candidate index.
SynthesisBatch sfc_compensate(const Tensor& f_old, const std::vector<int>& y_old,
                              const Tensor& f_new_rotated);

SynthesisBatch compensate(const StrategyConfig& cfg, const Tensor& f_old,
                          const std::vector<int>& y_old, const Tensor& f_new_rotated,
                          Rng& rng);

}  // namespace rfs
