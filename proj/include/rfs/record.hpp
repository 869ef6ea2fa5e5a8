#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "rfs/engine.hpp"

namespace rfs {

// Everything a single run produces, persisted as structured text. Records
// round-trip exactly: parse(serialize(r)) == r.
struct RunRecord {
    std::map<std::string, std::string> config_echo;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;

    int base_count = 0;   // B
    int per_phase = 0;    // C
    int phase_count = 0;  // T
    std::vector<int> class_order;

    std::string generation;
    std::string compensation;
    int mgs_candidates = 0;
    long zero_norm_pairs = 0;

    // accuracy[t][p] = (correct, total) for p <= t
    std::vector<std::vector<std::pair<long, long>>> accuracy;
    double avg_incremental_accuracy = 0.0;
    double final_accuracy_value = 0.0;
    double avg_forgetting = 0.0;

    std::vector<std::vector<EpochLog>> loss_log;   // per task, per epoch
    std::vector<std::vector<long>> confusion;      // per phase, seen^2 row-major
    std::vector<double> phase_seconds;

    int phases() const { return phase_count + 1; }
    std::string strategy_label() const { return generation + "+" + compensation; }

    void serialize(std::ostream& os) const;
    static RunRecord parse(std::istream& is);

    void save(const std::string& path) const;
    static RunRecord load(const std::string& path);

    bool operator==(const RunRecord& other) const;
};

// Equality of everything a run computes; wall-clock timings are measurements
// and excluded. The determinism contract compares runs this way.
bool same_results(const RunRecord& a, const RunRecord& b);

bool operator==(const EpochLog& a, const EpochLog& b);
bool operator==(const LossBreakdown& a, const LossBreakdown& b);

}  // namespace rfs
