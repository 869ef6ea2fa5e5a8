#include "rfs/driver.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "rfs/engine.hpp"
#include "rfs/linalg.hpp"
#include "rfs/synthdata.hpp"

#ifdef __unix__
#include <sys/wait.h>
#include <unistd.h>
#endif

namespace rfs {

namespace fs = std::filesystem;

namespace {

struct TaskViews {
    std::vector<TaskBatchView> train;  // one per task
    std::vector<TaskBatchView> test;
};

TaskViews build_task_views(const Dataset& ds, const TaskStream& stream) {
    // Unified label = rank of the class in the permuted order; task data is
    // gathered per task with labels already unified.
    std::vector<int> unified(ds.class_count);
    for (int i = 0; i < ds.class_count; ++i) unified[stream.class_order[i]] = i;
    std::vector<int> task_of_class(ds.class_count, -1);
    for (std::size_t t = 0; t < stream.tasks.size(); ++t)
        for (int c : stream.tasks[t]) task_of_class[c] = static_cast<int>(t);

    TaskViews views;
    views.train.resize(stream.tasks.size());
    views.test.resize(stream.tasks.size());
    auto scatter = [&](const LabeledSet& set, std::vector<TaskBatchView>& out) {
        for (std::size_t i = 0; i < set.images.size(); ++i) {
            const int cls = set.labels[i];
            TaskBatchView& view = out[task_of_class[cls]];
            view.images.push_back(&set.images[i]);
            view.labels.push_back(unified[cls]);
        }
    };
    scatter(ds.train, views.train);
    scatter(ds.test, views.test);
    return views;
}

TrainConfig train_config_from(const Config& cfg) {
    TrainConfig tc;
    tc.epochs = cfg.get_int("train.epochs");
    tc.batch_size = cfg.get_int("train.batch");
    tc.learning_rate = cfg.get_double("train.lr");
    tc.milestones = cfg.get_int_list("train.milestones");
    tc.lr_decay = cfg.get_double("train.lr_decay");
    tc.beta1 = cfg.get_double("train.beta1");
    tc.beta2 = cfg.get_double("train.beta2");
    tc.weight_decay = cfg.get_double("train.weight_decay");
    tc.alpha = cfg.get_double("loss.alpha");
    tc.feature_kd = cfg.get_bool("loss.feature_kd");
    tc.logit_kd = cfg.get_bool("loss.logit_kd");
    tc.kd_temperature = cfg.get_double("loss.kd_temperature");
    tc.compute_old_loss = cfg.get_bool("loss.compute_old");
    tc.strategy.generation = parse_generation(cfg.get_string("strategy.generation"));
    tc.strategy.compensation = parse_compensation(cfg.get_string("strategy.compensation"));
    tc.strategy.mgs_candidates = cfg.get_int("mgs.K");
    tc.strategy.noise_scale = cfg.get_double("strategy.noise_scale");
    return tc;
}

std::string hash_hex8(std::uint64_t hash) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08llx",
                  static_cast<unsigned long long>(hash & 0xFFFFFFFFULL));
    return buf;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

RunRecord execute_run(const Config& cfg, std::uint64_t seed, RunArtifacts* artifacts) {
    cfg.validate();

    const Dataset ds = generate_dataset(
        cfg.get_int("data.classes"), cfg.get_int("data.train_per_class"),
        cfg.get_int("data.test_per_class"), cfg.get_int("data.side"),
        static_cast<std::uint64_t>(cfg.get_int("data.seed")), cfg.get_double("data.noise_std"));
    const TaskStream stream =
        split_tasks(ds.class_count, cfg.get_int("tasks.B"), cfg.get_int("tasks.C"),
                    cfg.get_int("tasks.T"), static_cast<std::uint64_t>(cfg.get_int("tasks.order_seed")));
    const TaskViews views = build_task_views(ds, stream);

    Rng rng(seed);
    Model model;
    model.extractor = FeatureExtractor::init(ds.side * ds.side, cfg.get_int("model.hidden"),
                                             cfg.get_int("model.feature_dim"), rng);
    model.head = DualHead::init(cfg.get_int("model.feature_dim"), cfg.get_bool("model.head_bias"),
                                cfg.get_double("model.head_init_gain"));
    StatsStore store(cfg.get_int("model.feature_dim"), cfg.get_bool("gaussmem.tied_covariance"));
    const TrainConfig tc = train_config_from(cfg);
    Trainer trainer(model, store, tc, rng);

    RunRecord record;
    record.config_echo = cfg.values();
    record.config_hash = cfg.hash();
    record.seed = seed;
    record.base_count = stream.base_count;
    record.per_phase = stream.per_phase;
    record.phase_count = stream.phase_count;
    record.class_order = stream.class_order;
    record.generation = to_string(tc.strategy.generation);
    record.compensation = to_string(tc.strategy.compensation);
    record.mgs_candidates = tc.strategy.mgs_candidates;

    const int phases = stream.phase_count + 1;
    AccuracyMatrix acc(phases);

    for (int t = 0; t < phases; ++t) {
        const auto t0 = std::chrono::steady_clock::now();
        const int task_classes = static_cast<int>(stream.tasks[t].size());
        const int classes_before = model.head.seen_classes;

        std::optional<ModelSnapshot> snap;
        if (t >= 1) snap = snapshot(model);
        model.head.expand_unified(task_classes, rng);
        model.head.reset_aug(task_classes, rng);

        const std::vector<EpochLog> logs = trainer.train_task(
            t, views.train[t], classes_before, task_classes, snap ? &*snap : nullptr);
        for (const EpochLog& e : logs) record.zero_norm_pairs += e.zero_norm_pairs;
        record.loss_log.push_back(logs);

        trainer.finalize_task(t, views.train[t], classes_before, task_classes);

        std::vector<TaskBatchView> seen_tests(views.test.begin(), views.test.begin() + t + 1);
        const EvalResult eval = trainer.evaluate(seen_tests);
        record.accuracy.emplace_back();
        for (int p = 0; p <= t; ++p) {
            acc.set(t, p, eval.per_task[p].first, eval.per_task[p].second);
            record.accuracy[t].emplace_back(eval.per_task[p].first, eval.per_task[p].second);
        }
        record.confusion.push_back(eval.confusion);

        const auto t1 = std::chrono::steady_clock::now();
        record.phase_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
    }

    record.avg_incremental_accuracy = average_incremental_accuracy(acc);
    record.final_accuracy_value = final_accuracy(acc);
    record.avg_forgetting =
        stream.phase_count >= 1
            ? average_forgetting(acc, cfg.get_bool("metrics.forgetting_include_final"))
            : 0.0;
    if (artifacts) {
        artifacts->model = model;
        artifacts->store = store;
    }
    return record;
}

std::string run_dir_name(const Config& cfg, std::uint64_t seed) {
    return hash_hex8(cfg.hash()) + "-s" + std::to_string(seed);
}

PersistedRun run_and_persist(const Config& cfg, std::uint64_t seed, const fs::path& out_dir) {
    PersistedRun out;
    out.dir = out_dir / run_dir_name(cfg, seed);
    fs::create_directories(out.dir);
    const fs::path record_path = out.dir / "record.txt";
    if (fs::exists(record_path)) {
        out.record = RunRecord::load(record_path.string());
        out.reused = true;
        return out;
    }
    // Config echo next to the record so a cell can be re-run standalone.
    {
        std::ofstream os(out.dir / "config.txt");
        for (const auto& [k, v] : cfg.values())
            os << k << " = " << v << "\n";  // empty values are meaningful overrides
        os << "train.seed = " << seed << "\n";
    }
    RunArtifacts artifacts;
    out.record = execute_run(cfg, seed, &artifacts);

    CheckpointMeta meta;
    meta.task_index = out.record.phase_count;
    meta.seen_classes = artifacts.model.head.seen_classes;
    meta.config_hash = cfg.hash();
    save_checkpoint((out.dir / "model.ckpt").string(), artifacts.model, meta);
    artifacts.store.export_binary((out.dir / "stats.bin").string(), cfg.hash());

    // Unique temp name so concurrent writers of the same deterministic cell
    // cannot interleave; the rename publishes a complete record either way.
#ifdef __unix__
    const std::string tag = std::to_string(::getpid());
#else
    const std::string tag = "tmp";
#endif
    const fs::path tmp = out.dir / ("record.txt." + tag);
    out.record.save(tmp.string());
    fs::rename(tmp, record_path);
    return out;
}

std::vector<fs::path> run_sweep(const Config& cfg, const fs::path& out_dir, int jobs,
                                const std::string& self_exe) {
    cfg.validate();
    const std::vector<std::string> generations =
        cfg.has("sweep.generation") ? cfg.get_string_list("sweep.generation")
                                    : std::vector<std::string>{cfg.get_string("strategy.generation")};
    const std::vector<std::string> compensations =
        cfg.has("sweep.compensation")
            ? cfg.get_string_list("sweep.compensation")
            : std::vector<std::string>{cfg.get_string("strategy.compensation")};
    const std::vector<std::uint64_t> seeds =
        cfg.has("sweep.seeds") ? cfg.get_u64_list("sweep.seeds")
                               : std::vector<std::uint64_t>{
                                     static_cast<std::uint64_t>(cfg.get_int("train.seed"))};
    const std::vector<int> ks = cfg.has("sweep.K") ? cfg.get_int_list("sweep.K")
                                                   : std::vector<int>{cfg.get_int("mgs.K")};

    struct Cell {
        Config config;
        std::uint64_t seed;
        fs::path dir;
    };
    std::vector<Cell> cells;
    for (const std::string& g : generations)
        for (const std::string& c : compensations)
            for (int k : ks)
                for (std::uint64_t seed : seeds) {
                    Config cell = cfg;
                    cell.set("strategy.generation", g);
                    cell.set("strategy.compensation", c);
                    cell.set("mgs.K", std::to_string(k));
                    cell.set("sweep.generation", "");
                    cell.set("sweep.compensation", "");
                    cell.set("sweep.seeds", "");
                    cell.set("sweep.K", "");
                    cells.push_back({cell, seed, out_dir / run_dir_name(cell, seed)});
                }

    std::vector<fs::path> records;
    records.reserve(cells.size());
    for (const Cell& cell : cells) records.push_back(cell.dir / "record.txt");

#ifdef __unix__
    if (jobs > 1 && !self_exe.empty()) {
        // Worker processes: each cell is an isolated `run` invocation.
        std::size_t next = 0;
        int active = 0;
        auto spawn = [&](const Cell& cell) {
            fs::create_directories(cell.dir);
            const fs::path cfg_path = cell.dir / "config.txt";
            {
                std::ofstream os(cfg_path);
                for (const auto& [k, v] : cell.config.values())
                    os << k << " = " << v << "\n";  // empty values are meaningful overrides
            }
            const pid_t pid = fork();
            if (pid < 0) throw Error("sweep: fork failed");
            if (pid == 0) {
                const std::string seed_str = std::to_string(cell.seed);
                execl(self_exe.c_str(), self_exe.c_str(), "run", "--config",
                      cfg_path.c_str(), "--out", out_dir.c_str(), "--seed", seed_str.c_str(),
                      static_cast<char*>(nullptr));
                _exit(127);
            }
            ++active;
        };
        bool failed = false;
        while (next < cells.size() || active > 0) {
            while (next < cells.size() && active < jobs) {
                if (fs::exists(cells[next].dir / "record.txt")) {
                    ++next;  // resumable: completed cells are skipped
                    continue;
                }
                spawn(cells[next++]);
            }
            if (active > 0) {
                int status = 0;
                if (waitpid(-1, &status, 0) > 0) {
                    --active;
                    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) failed = true;
                }
            }
        }
        if (failed) throw Error("sweep: one or more worker runs failed");
        return records;
    }
#endif
    (void)self_exe;
    for (const Cell& cell : cells) run_and_persist(cell.config, cell.seed, out_dir);
    return records;
}

namespace {

struct GroupKey {
    std::string generation;
    std::string compensation;
    int k = 0;
    bool operator<(const GroupKey& o) const {
        return std::tie(generation, compensation, k) <
               std::tie(o.generation, o.compensation, o.k);
    }
};

std::vector<RunRecord> load_records(const fs::path& dir) {
    std::vector<RunRecord> records;
    std::vector<fs::path> paths;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().filename() == "record.txt")
            paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    for (const fs::path& p : paths) records.push_back(RunRecord::load(p.string()));
    if (records.empty()) throw Error("report: no records found under " + dir.string());
    return records;
}

double record_phase_overall(const RunRecord& r, int phase) {
    long correct = 0, total = 0;
    for (const auto& [c, t] : r.accuracy[phase]) {
        correct += c;
        total += t;
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

void write_report(const fs::path& dir) {
    const std::vector<RunRecord> records = load_records(dir);

    // Plot files only make sense over a shared protocol.
    for (const RunRecord& r : records)
        if (r.base_count != records.front().base_count || r.per_phase != records.front().per_phase ||
            r.phase_count != records.front().phase_count)
            throw Error("report: records mix protocols (B, C, T differ); refusing");

    std::map<GroupKey, std::vector<const RunRecord*>> groups;
    std::set<int> k_values;
    for (const RunRecord& r : records) {
        groups[{r.generation, r.compensation, r.mgs_candidates}].push_back(&r);
        k_values.insert(r.mgs_candidates);
    }
    const bool multi_k = k_values.size() > 1;
    auto label_of = [&](const GroupKey& key) {
        std::string label = key.generation + "+" + key.compensation;
        if (multi_k) label += "@K" + std::to_string(key.k);
        return label;
    };

    {
        std::ofstream os(dir / "summary.tsv");
        os << "strategy\tseed\tK\tavg_incremental_accuracy\tfinal_accuracy\tavg_forgetting\n";
        for (const auto& [key, rs] : groups)
            for (const RunRecord* r : rs)
                os << key.generation << "+" << key.compensation << "\t" << r->seed << "\t"
                   << key.k << "\t" << fmt_double(r->avg_incremental_accuracy) << "\t"
                   << fmt_double(r->final_accuracy_value) << "\t"
                   << fmt_double(r->avg_forgetting) << "\n";
    }

    const int phases = records.front().phase_count + 1;
    {
        // Overall accuracy per phase, seed-averaged per strategy.
        std::ofstream os(dir / "phase_accuracy.tsv");
        os << "phase";
        for (const auto& [key, rs] : groups) os << "\t" << label_of(key);
        os << "\n";
        for (int t = 0; t < phases; ++t) {
            os << t;
            for (const auto& [key, rs] : groups) {
                double acc = 0.0;
                for (const RunRecord* r : rs) acc += record_phase_overall(*r, t);
                os << "\t" << fmt_double(acc / rs.size());
            }
            os << "\n";
        }
    }
    {
        // Accuracy of the initial task's classes across phases.
        std::ofstream os(dir / "task0_accuracy.tsv");
        os << "phase";
        for (const auto& [key, rs] : groups) os << "\t" << label_of(key);
        os << "\n";
        for (int t = 0; t < phases; ++t) {
            os << t;
            for (const auto& [key, rs] : groups) {
                double acc = 0.0;
                for (const RunRecord* r : rs)
                    acc += static_cast<double>(r->accuracy[t][0].first) / r->accuracy[t][0].second;
                os << "\t" << fmt_double(acc / rs.size());
            }
            os << "\n";
        }
    }
    for (const auto& [key, rs] : groups) {
        // Final-phase confusion of the group's first record.
        const RunRecord* r = rs.front();
        const std::vector<long>& conf = r->confusion.back();
        const int seen = static_cast<int>(std::lround(std::sqrt(static_cast<double>(conf.size()))));
        std::ofstream os(dir / ("confusion_" + label_of(key) + ".tsv"));
        os << "true_class";
        for (int c = 0; c < seen; ++c) os << "\tpred_" << c;
        os << "\n";
        for (int i = 0; i < seen; ++i) {
            os << i;
            for (int j = 0; j < seen; ++j) os << "\t" << conf[static_cast<std::size_t>(i) * seen + j];
            os << "\n";
        }
    }
}

}  // namespace rfs
