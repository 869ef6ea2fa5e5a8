#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rfs/errors.hpp"
#include "rfs/rng.hpp"

namespace rfs {

struct Image {
    int side = 0;
    std::vector<double> pixels;  // row-major side x side, values in [0, 1]
};

enum class Split { train, test };

struct LabeledSet {
    std::vector<Image> images;
    std::vector<int> labels;
    Split split = Split::train;
};

struct Dataset {
    LabeledSet train;
    LabeledSet test;
    int class_count = 0;
    int side = 0;
};

// Ordered partition of class ids into the initial phase and T increments.
struct TaskStream {
    std::vector<int> class_order;  // permutation of all class ids
    int base_count = 0;            // B
    int per_phase = 0;             // C
    int phase_count = 0;           // T
    std::vector<std::vector<int>> tasks;  // tasks[0] has B ids, tasks[1..T] have C

    int total_classes() const { return static_cast<int>(class_order.size()); }
    // Position of a class id in class_order; the unified-head column index.
    int unified_index(int class_id) const;
};

// Number of distinct class templates the generator can produce.
int dataset_capacity();

// Each class is an oriented sinusoidal bar pattern: a class-specific angle
// drawn from a set avoiding 90-degree symmetry, a spatial frequency, and a
// phase offset, plus i.i.d. clamped pixel noise. Deterministic in all
// arguments. Angles are chosen so every 90-degree rotation of a class
// template differs from all class templates.
Dataset generate_dataset(int class_count, int per_class_train, int per_class_test,
                         int side, std::uint64_t seed, double noise_std = 0.08);

// Exact counterclockwise quarter-turn permutation, applied quarter_turns
// times; quarter_turns must be in {0, 1, 2, 3}.
Image rotate90(const Image& img, int quarter_turns);

// Permute classes by order_seed, then assign the first B to task 0 and C per
// later task. Requires B + C*T == class_count.
TaskStream split_tasks(int class_count, int base_count, int per_phase, int phase_count,
                       std::uint64_t order_seed);

// Flat little-endian binary export/import of a dataset.
void export_dataset(const Dataset& ds, const std::string& path);
Dataset import_dataset(const std::string& path);

}  // namespace rfs
