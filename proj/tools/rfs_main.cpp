#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "rfs/driver.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNanAbort = 3;

void print_usage() {
    std::cout
        << "rfs -- incremental-learning experiment runner\n"
        << "\n"
        << "Usage:\n"
        << "  rfs run    --config PATH --out DIR [--seed N]\n"
        << "  rfs sweep  --config PATH --out DIR [--jobs N]\n"
        << "  rfs report --in DIR\n"
        << "  rfs selftest\n"
        << "\n"
        << "run      executes one configuration and writes a record directory\n"
        << "sweep    runs every strategy/seed grid cell listed in the config\n"
        << "report   rebuilds summary.tsv and plot files from stored records\n"
        << "selftest executes the built-in invariant suite\n"
        << "\n"
        << "Any config key can be overridden via environment variables named\n"
        << "RFS_<key with dots as underscores>, e.g. RFS_tasks_B=10.\n";
}

struct Args {
    std::string command;
    std::string config_path;
    std::string out_dir;
    std::string in_dir;
    long seed = -1;
    int jobs = 1;
};

bool parse_args(int argc, char** argv, Args* args) {
    if (argc < 2) return false;
    args->command = argv[1];
    for (int i = 2; i < argc; ++i) {
        const std::string arg = argv[i];
        auto next = [&](const char* what) -> const char* {
            if (i + 1 >= argc) {
                std::cerr << "missing value for " << what << "\n";
                return nullptr;
            }
            return argv[++i];
        };
        if (arg == "--config") {
            const char* v = next("--config");
            if (!v) return false;
            args->config_path = v;
        } else if (arg == "--out") {
            const char* v = next("--out");
            if (!v) return false;
            args->out_dir = v;
        } else if (arg == "--in") {
            const char* v = next("--in");
            if (!v) return false;
            args->in_dir = v;
        } else if (arg == "--seed") {
            const char* v = next("--seed");
            if (!v) return false;
            args->seed = std::stol(v);
        } else if (arg == "--jobs") {
            const char* v = next("--jobs");
            if (!v) return false;
            args->jobs = std::stoi(v);
        } else if (arg == "--help" || arg == "-h") {
            return false;
        } else {
            std::cerr << "unknown argument: " << arg << "\n";
            return false;
        }
    }
    return true;
}

std::string self_exe_path(const char* argv0) {
    std::error_code ec;
    const fs::path link = fs::read_symlink("/proc/self/exe", ec);
    if (!ec) return link.string();
    return argv0 ? argv0 : "";
}

rfs::Config load_config(const Args& args) {
    if (args.config_path.empty()) throw rfs::ConfigError("--config", "path is required");
    rfs::Config cfg = rfs::Config::parse_file(args.config_path);
    cfg.apply_env_overrides();
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    Args args;
    if (!parse_args(argc, argv, &args)) {
        print_usage();
        return argc < 2 ? kExitConfig : kExitOk;
    }

    try {
        if (args.command == "run") {
            if (args.out_dir.empty()) throw rfs::ConfigError("--out", "directory is required");
            const rfs::Config cfg = load_config(args);
            const std::uint64_t seed = args.seed >= 0
                                           ? static_cast<std::uint64_t>(args.seed)
                                           : static_cast<std::uint64_t>(cfg.get_int("train.seed"));
            const rfs::PersistedRun run = rfs::run_and_persist(cfg, seed, args.out_dir);
            std::cout << (run.reused ? "record exists, reused: " : "record written: ")
                      << (run.dir / "record.txt").string() << "\n";
            std::printf("avg_incremental_accuracy = %.4f\n",
                        run.record.avg_incremental_accuracy);
            std::printf("final_accuracy           = %.4f\n", run.record.final_accuracy_value);
            std::printf("avg_forgetting           = %.4f\n", run.record.avg_forgetting);
            return kExitOk;
        }
        if (args.command == "sweep") {
            if (args.out_dir.empty()) throw rfs::ConfigError("--out", "directory is required");
            const rfs::Config cfg = load_config(args);
            const auto records =
                rfs::run_sweep(cfg, args.out_dir, args.jobs, self_exe_path(argv[0]));
            std::cout << records.size() << " runs complete\n";
            rfs::write_report(args.out_dir);
            std::cout << "summary written: " << (fs::path(args.out_dir) / "summary.tsv").string()
                      << "\n";
            return kExitOk;
        }
        if (args.command == "report") {
            if (args.in_dir.empty()) throw rfs::ConfigError("--in", "directory is required");
            rfs::write_report(args.in_dir);
            std::cout << "report written under " << args.in_dir << "\n";
            return kExitOk;
        }
        if (args.command == "selftest") {
            return rfs::selftest() ? kExitOk : 1;
        }
        print_usage();
        return kExitConfig;
    } catch (const rfs::NanAbortError& e) {
        // Diagnostic dump for non-finite losses.
        const fs::path diag =
            fs::path(args.out_dir.empty() ? "." : args.out_dir) / "nan_abort.txt";
        std::ofstream(diag) << e.what() << "\n";
        std::cerr << "run aborted on non-finite loss; diagnostic at " << diag.string() << "\n"
                  << e.what() << "\n";
        return kExitNanAbort;
    } catch (const rfs::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}
