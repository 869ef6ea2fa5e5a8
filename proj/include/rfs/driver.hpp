#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rfs/config.hpp"
#include "rfs/model.hpp"
#include "rfs/record.hpp"

namespace rfs {

// Final model and statistics of a run, for checkpoint/stats persistence.
struct RunArtifacts {
    Model model;
    StatsStore store{0};
};

// Full pipeline for one configuration and seed: dataset generation, task
// split, per-task train/finalize/evaluate, metrics. Pure function of its
// arguments.
RunRecord execute_run(const Config& cfg, std::uint64_t seed, RunArtifacts* artifacts = nullptr);

// Directory name for a run: <config-hash-hex8>-s<seed>.
std::string run_dir_name(const Config& cfg, std::uint64_t seed);

// Runs and persists record.txt plus a config echo under
// out_dir/run_dir_name(). Existing records are never overwritten; the
// previous record is returned instead (sweeps are resumable).
struct PersistedRun {
    RunRecord record;
    std::filesystem::path dir;
    bool reused = false;
};
PersistedRun run_and_persist(const Config& cfg, std::uint64_t seed,
                             const std::filesystem::path& out_dir);

// One run per (generation x compensation x K x seed) grid cell; cells run in
// parallel worker processes when jobs > 1. Returns record paths.
std::vector<std::filesystem::path> run_sweep(const Config& cfg,
                                             const std::filesystem::path& out_dir, int jobs,
                                             const std::string& self_exe);

// Rebuilds summary table and plot files purely from persisted records.
void write_report(const std::filesystem::path& dir);

// Compact invariant suite; prints one line per check, returns true when all
// pass.
bool selftest();

}  // namespace rfs
