#pragma once

#include <vector>

#include "rfs/errors.hpp"

namespace rfs {

// Lower-triangular accuracy bookkeeping: entry (t, p) is the accuracy on
// task p's test classes measured after phase t, kept as exact counts and
// converted to fractions only at read time.
class AccuracyMatrix {
public:
    explicit AccuracyMatrix(int phase_count);  // phases = T + 1 rows

    void set(int phase, int task, long correct, long total);
    bool has(int phase, int task) const;
    double at(int phase, int task) const;
    void counts(int phase, int task, long* correct, long* total) const;

    // Accuracy over all classes seen by the given phase (test-size weighted).
    double phase_overall(int phase) const;

    int phases() const { return phase_count_; }
    bool complete() const;

private:
    struct Cell {
        long correct = 0;
        long total = 0;
        bool set = false;
    };
    int phase_count_;
    std::vector<std::vector<Cell>> cells_;  // cells_[t][p], p <= t

    const Cell& cell(int phase, int task) const;
};

// Mean of phase_overall over all phases, the initial one included.
double average_incremental_accuracy(const AccuracyMatrix& mat);

// Overall accuracy after the last phase.
double final_accuracy(const AccuracyMatrix& mat);

// Mean over tasks of peak accuracy minus final accuracy. The final task has
// no post-learning phase and is excluded unless include_final_task is set.
double average_forgetting(const AccuracyMatrix& mat, bool include_final_task = false);

}  // namespace rfs
