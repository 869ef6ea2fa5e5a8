#include "rfs/record.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace rfs {

namespace {

// %.17g preserves doubles exactly across a text round trip.
std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& s, const char* what) {
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw Error(std::string("record: bad number for ") + what + ": '" + s + "'");
    }
}

long parse_long(const std::string& s, const char* what) {
    try {
        return std::stol(s);
    } catch (const std::exception&) {
        throw Error(std::string("record: bad integer for ") + what + ": '" + s + "'");
    }
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

}  // namespace

bool operator==(const LossBreakdown& a, const LossBreakdown& b) {
    return a.new_cls == b.new_cls && a.new_aug_cls == b.new_aug_cls && a.new_ka == b.new_ka &&
           a.old_cls == b.old_cls && a.old_feat_kd == b.old_feat_kd &&
           a.old_logit_kd == b.old_logit_kd && a.total == b.total;
}

bool operator==(const EpochLog& a, const EpochLog& b) {
    return a.epoch == b.epoch && a.learning_rate == b.learning_rate && a.mean == b.mean &&
           a.steps == b.steps && a.zero_norm_pairs == b.zero_norm_pairs;
}

bool same_results(const RunRecord& a, const RunRecord& b) {
    return a.config_echo == b.config_echo && a.config_hash == b.config_hash &&
           a.seed == b.seed && a.base_count == b.base_count && a.per_phase == b.per_phase &&
           a.phase_count == b.phase_count && a.class_order == b.class_order &&
           a.generation == b.generation && a.compensation == b.compensation &&
           a.mgs_candidates == b.mgs_candidates && a.zero_norm_pairs == b.zero_norm_pairs &&
           a.accuracy == b.accuracy &&
           a.avg_incremental_accuracy == b.avg_incremental_accuracy &&
           a.final_accuracy_value == b.final_accuracy_value &&
           a.avg_forgetting == b.avg_forgetting && a.loss_log == b.loss_log &&
           a.confusion == b.confusion;
}

bool RunRecord::operator==(const RunRecord& other) const {
    return same_results(*this, other) && phase_seconds == other.phase_seconds;
}

void RunRecord::serialize(std::ostream& os) const {
    os << "rfs_record 1\n";
    os << "[config]\n";
    for (const auto& [k, v] : config_echo) os << k << " = " << v << "\n";
    os << "[meta]\n";
    char hashbuf[32];
    std::snprintf(hashbuf, sizeof(hashbuf), "%016" PRIx64, config_hash);
    os << "hash = " << hashbuf << "\n";
    os << "seed = " << seed << "\n";
    os << "B = " << base_count << "\n";
    os << "C = " << per_phase << "\n";
    os << "T = " << phase_count << "\n";
    os << "class_order =";
    for (int c : class_order) os << " " << c;
    os << "\n";
    os << "generation = " << generation << "\n";
    os << "compensation = " << compensation << "\n";
    os << "mgs_K = " << mgs_candidates << "\n";
    os << "zero_norm_pairs = " << zero_norm_pairs << "\n";

    os << "[accuracy]\n";
    for (std::size_t t = 0; t < accuracy.size(); ++t)
        for (std::size_t p = 0; p < accuracy[t].size(); ++p)
            os << "a " << t << " " << p << " " << accuracy[t][p].first << "/"
               << accuracy[t][p].second << "\n";

    os << "[metrics]\n";
    os << "avg_incremental_accuracy = " << fmt_double(avg_incremental_accuracy) << "\n";
    os << "final_accuracy = " << fmt_double(final_accuracy_value) << "\n";
    os << "avg_forgetting = " << fmt_double(avg_forgetting) << "\n";

    for (std::size_t t = 0; t < loss_log.size(); ++t) {
        os << "[loss " << t << "]\n";
        for (const EpochLog& e : loss_log[t]) {
            os << e.epoch << " " << fmt_double(e.learning_rate) << " " << e.steps << " "
               << e.zero_norm_pairs;
            const LossBreakdown& m = e.mean;
            for (double v : {m.new_cls, m.new_aug_cls, m.new_ka, m.old_cls, m.old_feat_kd,
                             m.old_logit_kd, m.total})
                os << " " << fmt_double(v);
            os << "\n";
        }
    }

    for (std::size_t t = 0; t < confusion.size(); ++t) {
        os << "[confusion " << t << "]\n";
        for (std::size_t i = 0; i < confusion[t].size(); ++i)
            os << confusion[t][i] << ((i + 1) % 16 == 0 || i + 1 == confusion[t].size() ? "\n" : " ");
    }

    os << "[timing]\n";
    for (std::size_t t = 0; t < phase_seconds.size(); ++t)
        os << "phase " << t << " " << fmt_double(phase_seconds[t]) << "\n";
    os << "[end]\n";
}

RunRecord RunRecord::parse(std::istream& is) {
    RunRecord r;
    std::string line;
    if (!std::getline(is, line) || line != "rfs_record 1")
        throw Error("record: missing or unsupported header");

    enum class Section { none, config, meta, accuracy, metrics, loss, confusion, timing, end };
    Section section = Section::none;
    int section_index = -1;

    auto kv = [](const std::string& l, std::string* key, std::string* value) {
        const std::size_t eq = l.find('=');
        if (eq == std::string::npos) return false;
        *key = l.substr(0, eq);
        while (!key->empty() && key->back() == ' ') key->pop_back();
        *value = l.substr(eq + 1);
        while (!value->empty() && value->front() == ' ') value->erase(value->begin());
        return true;
    };

    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line.front() == '[') {
            const std::string inside = line.substr(1, line.find(']') - 1);
            std::istringstream hs(inside);
            std::string name;
            hs >> name;
            section_index = -1;
            hs >> section_index;
            if (name == "config") section = Section::config;
            else if (name == "meta") section = Section::meta;
            else if (name == "accuracy") section = Section::accuracy;
            else if (name == "metrics") section = Section::metrics;
            else if (name == "loss") section = Section::loss;
            else if (name == "confusion") section = Section::confusion;
            else if (name == "timing") section = Section::timing;
            else if (name == "end") { section = Section::end; break; }
            else throw Error("record: unknown section " + name);
            if (section == Section::loss) {
                if (section_index != static_cast<int>(r.loss_log.size()))
                    throw Error("record: loss sections out of order");
                r.loss_log.emplace_back();
            }
            if (section == Section::confusion) {
                if (section_index != static_cast<int>(r.confusion.size()))
                    throw Error("record: confusion sections out of order");
                r.confusion.emplace_back();
            }
            continue;
        }

        std::string key, value;
        switch (section) {
            case Section::config: {
                if (!kv(line, &key, &value)) throw Error("record: bad config line: " + line);
                r.config_echo[key] = value;
                break;
            }
            case Section::meta: {
                if (!kv(line, &key, &value)) throw Error("record: bad meta line: " + line);
                if (key == "hash") r.config_hash = std::stoull(value, nullptr, 16);
                else if (key == "seed") r.seed = std::stoull(value);
                else if (key == "B") r.base_count = static_cast<int>(parse_long(value, "B"));
                else if (key == "C") r.per_phase = static_cast<int>(parse_long(value, "C"));
                else if (key == "T") r.phase_count = static_cast<int>(parse_long(value, "T"));
                else if (key == "class_order") {
                    for (const std::string& tok : split_ws(value))
                        r.class_order.push_back(static_cast<int>(parse_long(tok, "class_order")));
                } else if (key == "generation") r.generation = value;
                else if (key == "compensation") r.compensation = value;
                else if (key == "mgs_K") r.mgs_candidates = static_cast<int>(parse_long(value, "mgs_K"));
                else if (key == "zero_norm_pairs") r.zero_norm_pairs = parse_long(value, "zero_norm_pairs");
                else throw Error("record: unknown meta key " + key);
                break;
            }
            case Section::accuracy: {
                const auto toks = split_ws(line);
                if (toks.size() != 4 || toks[0] != "a")
                    throw Error("record: bad accuracy line: " + line);
                const int t = static_cast<int>(parse_long(toks[1], "phase"));
                const int p = static_cast<int>(parse_long(toks[2], "task"));
                const std::size_t slash = toks[3].find('/');
                if (slash == std::string::npos) throw Error("record: bad fraction: " + toks[3]);
                const long correct = parse_long(toks[3].substr(0, slash), "correct");
                const long total = parse_long(toks[3].substr(slash + 1), "total");
                if (t == static_cast<int>(r.accuracy.size())) r.accuracy.emplace_back();
                if (t != static_cast<int>(r.accuracy.size()) - 1 ||
                    p != static_cast<int>(r.accuracy[t].size()))
                    throw Error("record: accuracy entries out of order");
                r.accuracy[t].emplace_back(correct, total);
                break;
            }
            case Section::metrics: {
                if (!kv(line, &key, &value)) throw Error("record: bad metrics line: " + line);
                if (key == "avg_incremental_accuracy")
                    r.avg_incremental_accuracy = parse_double(value, key.c_str());
                else if (key == "final_accuracy")
                    r.final_accuracy_value = parse_double(value, key.c_str());
                else if (key == "avg_forgetting")
                    r.avg_forgetting = parse_double(value, key.c_str());
                else throw Error("record: unknown metric " + key);
                break;
            }
            case Section::loss: {
                const auto toks = split_ws(line);
                if (toks.size() != 11) throw Error("record: bad loss line: " + line);
                EpochLog e;
                e.epoch = static_cast<int>(parse_long(toks[0], "epoch"));
                e.learning_rate = parse_double(toks[1], "lr");
                e.steps = static_cast<int>(parse_long(toks[2], "steps"));
                e.zero_norm_pairs = parse_long(toks[3], "zero_norm_pairs");
                e.mean.new_cls = parse_double(toks[4], "new_cls");
                e.mean.new_aug_cls = parse_double(toks[5], "new_aug_cls");
                e.mean.new_ka = parse_double(toks[6], "new_ka");
                e.mean.old_cls = parse_double(toks[7], "old_cls");
                e.mean.old_feat_kd = parse_double(toks[8], "old_feat_kd");
                e.mean.old_logit_kd = parse_double(toks[9], "old_logit_kd");
                e.mean.total = parse_double(toks[10], "total");
                r.loss_log.back().push_back(e);
                break;
            }
            case Section::confusion: {
                for (const std::string& tok : split_ws(line))
                    r.confusion.back().push_back(parse_long(tok, "confusion"));
                break;
            }
            case Section::timing: {
                const auto toks = split_ws(line);
                if (toks.size() != 3 || toks[0] != "phase")
                    throw Error("record: bad timing line: " + line);
                const int t = static_cast<int>(parse_long(toks[1], "phase"));
                if (t != static_cast<int>(r.phase_seconds.size()))
                    throw Error("record: timing entries out of order");
                r.phase_seconds.push_back(parse_double(toks[2], "seconds"));
                break;
            }
            default:
                throw Error("record: content outside any section: " + line);
        }
    }
    if (section != Section::end) throw Error("record: missing [end] marker");
    return r;
}

void RunRecord::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw Error("record: cannot open " + path);
    serialize(os);
    if (!os) throw Error("record: write failed for " + path);
}

RunRecord RunRecord::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("record: cannot open " + path);
    return parse(is);
}

}  // namespace rfs
