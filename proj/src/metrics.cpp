#include "rfs/metrics.hpp"

#include <algorithm>
#include <string>

namespace rfs {

AccuracyMatrix::AccuracyMatrix(int phase_count) : phase_count_(phase_count) {
    if (phase_count < 1) throw ProtocolError("AccuracyMatrix: need at least one phase");
    cells_.resize(phase_count);
    for (int t = 0; t < phase_count; ++t) cells_[t].resize(t + 1);
}

const AccuracyMatrix::Cell& AccuracyMatrix::cell(int phase, int task) const {
    if (phase < 0 || phase >= phase_count_ || task < 0 || task > phase)
        throw ProtocolError("AccuracyMatrix: index (" + std::to_string(phase) + ", " +
                            std::to_string(task) + ") outside the lower triangle");
    return cells_[phase][task];
}

void AccuracyMatrix::set(int phase, int task, long correct, long total) {
    const Cell& c = cell(phase, task);  // bounds check
    if (total <= 0 || correct < 0 || correct > total)
        throw ProtocolError("AccuracyMatrix: invalid counts");
    Cell& mut = cells_[phase][task];
    mut = Cell{correct, total, true};
    (void)c;
}

bool AccuracyMatrix::has(int phase, int task) const { return cell(phase, task).set; }

double AccuracyMatrix::at(int phase, int task) const {
    const Cell& c = cell(phase, task);
    if (!c.set) throw ProtocolError("AccuracyMatrix: entry not filled");
    return static_cast<double>(c.correct) / static_cast<double>(c.total);
}

void AccuracyMatrix::counts(int phase, int task, long* correct, long* total) const {
    const Cell& c = cell(phase, task);
    if (!c.set) throw ProtocolError("AccuracyMatrix: entry not filled");
    if (correct) *correct = c.correct;
    if (total) *total = c.total;
}

double AccuracyMatrix::phase_overall(int phase) const {
    long correct = 0, total = 0;
    for (int p = 0; p <= phase; ++p) {
        const Cell& c = cell(phase, p);
        if (!c.set) throw ProtocolError("AccuracyMatrix: phase " + std::to_string(phase) +
                                        " incomplete at task " + std::to_string(p));
        correct += c.correct;
        total += c.total;
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

bool AccuracyMatrix::complete() const {
    for (int t = 0; t < phase_count_; ++t)
        for (int p = 0; p <= t; ++p)
            if (!cells_[t][p].set) return false;
    return true;
}

double average_incremental_accuracy(const AccuracyMatrix& mat) {
    if (!mat.complete()) throw ProtocolError("average_incremental_accuracy: matrix incomplete");
    double acc = 0.0;
    for (int t = 0; t < mat.phases(); ++t) acc += mat.phase_overall(t);
    return acc / mat.phases();
}

double final_accuracy(const AccuracyMatrix& mat) {
    if (!mat.complete()) throw ProtocolError("final_accuracy: matrix incomplete");
    return mat.phase_overall(mat.phases() - 1);
}

double average_forgetting(const AccuracyMatrix& mat, bool include_final_task) {
    if (!mat.complete()) throw ProtocolError("average_forgetting: matrix incomplete");
    const int last = mat.phases() - 1;
    if (last < 1) throw ProtocolError("average_forgetting: undefined for a single phase");
    const int task_end = include_final_task ? last + 1 : last;
    double acc = 0.0;
    for (int p = 0; p < task_end; ++p) {
        double peak = 0.0;
        for (int t = p; t <= last; ++t) peak = std::max(peak, mat.at(t, p));
        acc += peak - mat.at(last, p);
    }
    return acc / task_end;
}

}  // namespace rfs
