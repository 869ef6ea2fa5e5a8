#include "rfs/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "rfs/compensate.hpp"

namespace rfs {

namespace {

struct KeySpec {
    const char* key;
    const char* default_value;  // nullptr = required
};

// Schema: every accepted key with its default; required fields have none.
const KeySpec kSchema[] = {
    {"data.classes", nullptr},
    {"data.train_per_class", "100"},
    {"data.test_per_class", "30"},
    {"data.side", "8"},
    {"data.noise_std", "0.08"},
    {"data.seed", "7"},
    {"tasks.B", nullptr},
    {"tasks.C", nullptr},
    {"tasks.T", nullptr},
    {"tasks.order_seed", "0"},
    {"model.hidden", "64"},
    {"model.feature_dim", "32"},
    {"model.head_bias", "false"},
    {"model.head_init_gain", "1.0"},
    {"train.epochs", "30"},
    {"train.batch", "128"},
    {"train.lr", "0.001"},
    {"train.milestones", "14,27"},
    {"train.lr_decay", "0.1"},
    {"train.beta1", "0.9"},
    {"train.beta2", "0.999"},
    {"train.weight_decay", "2e-4"},
    {"train.seed", "0"},
    {"loss.alpha", "15"},
    {"loss.feature_kd", "true"},
    {"loss.logit_kd", "true"},
    {"loss.kd_temperature", "1.0"},
    {"loss.compute_old", "true"},
    {"mgs.K", "1000"},
    {"gaussmem.tied_covariance", "false"},
    {"strategy.generation", "mgs"},
    {"strategy.compensation", "sfc"},
    {"strategy.noise_scale", "-1"},
    {"metrics.forgetting_include_final", "false"},
    {"sweep.generation", ""},
    {"sweep.compensation", ""},
    {"sweep.seeds", ""},
    {"sweep.K", ""},
};

const KeySpec* find_spec(const std::string& key) {
    for (const KeySpec& spec : kSchema)
        if (key == spec.key) return &spec;
    return nullptr;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool is_sweep_key(const std::string& key) { return key.rfind("sweep.", 0) == 0; }

}  // namespace

std::uint64_t fnv1a_hash(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

Config Config::defaults() {
    Config cfg;
    for (const KeySpec& spec : kSchema)
        if (spec.default_value) cfg.values_[spec.key] = spec.default_value;
    return cfg;
}

Config Config::parse_text(const std::string& text) {
    Config cfg = defaults();
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::size_t hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no), "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        cfg.set(key, value);
    }
    return cfg;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError(path, "cannot open config file");
    std::ostringstream os;
    os << is.rdbuf();
    return parse_text(os.str());
}

void Config::set(const std::string& key, const std::string& value) {
    if (!find_spec(key)) throw ConfigError(key, "unknown key");
    values_[key] = value;
}

bool Config::has(const std::string& key) const {
    auto it = values_.find(key);
    return it != values_.end() && !it->second.empty();
}

int Config::get_int(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t pos = 0;
        const int out = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(key, "expected an integer, got '" + v + "'");
    }
}

double Config::get_double(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(key, "expected a number, got '" + v + "'");
    }
}

bool Config::get_bool(const std::string& key) const {
    const std::string v = get_string(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key, "expected true/false, got '" + v + "'");
}

std::string Config::get_string(const std::string& key) const {
    const KeySpec* spec = find_spec(key);
    if (!spec) throw ConfigError(key, "unknown key");
    auto it = values_.find(key);
    if (it == values_.end() || (it->second.empty() && !spec->default_value))
        throw ConfigError(key, "required field is missing");
    return it->second;
}

std::vector<std::string> Config::get_string_list(const std::string& key) const {
    const std::string v = get_string(key);
    std::vector<std::string> out;
    std::istringstream is(v);
    std::string item;
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<int> Config::get_int_list(const std::string& key) const {
    std::vector<int> out;
    for (const std::string& item : get_string_list(key)) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ConfigError(key, "expected integers, got '" + item + "'");
        }
    }
    return out;
}

std::vector<std::uint64_t> Config::get_u64_list(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const std::string& item : get_string_list(key)) {
        try {
            out.push_back(std::stoull(item));
        } catch (const std::exception&) {
            throw ConfigError(key, "expected unsigned integers, got '" + item + "'");
        }
    }
    return out;
}

void Config::apply_env_overrides(const std::string& prefix) {
    for (const KeySpec& spec : kSchema) {
        std::string name = prefix + spec.key;
        std::replace(name.begin(), name.end(), '.', '_');
        if (const char* v = std::getenv(name.c_str())) values_[spec.key] = v;
    }
}

void Config::validate() const {
    for (const KeySpec& spec : kSchema) {
        if (spec.default_value) continue;
        auto it = values_.find(spec.key);
        if (it == values_.end() || it->second.empty())
            throw ConfigError(spec.key, "required field is missing");
    }

    const int classes = get_int("data.classes");
    if (classes < 2) throw ConfigError("data.classes", "must be >= 2");
    if (get_int("data.train_per_class") < 2)
        throw ConfigError("data.train_per_class", "must be >= 2");
    if (get_int("data.test_per_class") < 1) throw ConfigError("data.test_per_class", "must be >= 1");
    if (get_double("data.noise_std") < 0.0) throw ConfigError("data.noise_std", "must be >= 0");
    if (get_int("data.side") < 4) throw ConfigError("data.side", "must be >= 4");

    const int b = get_int("tasks.B");
    const int c = get_int("tasks.C");
    const int t = get_int("tasks.T");
    if (b < 1) throw ConfigError("tasks.B", "must be >= 1");
    if (c < 0 || t < 0) throw ConfigError("tasks.C", "C and T must be >= 0");
    if (b + c * t != classes)
        throw ConfigError("tasks.B", "B + C*T = " + std::to_string(b + c * t) +
                                         " does not equal data.classes = " +
                                         std::to_string(classes));

    if (get_int("model.hidden") < 1) throw ConfigError("model.hidden", "must be >= 1");
    if (get_int("model.feature_dim") < 1) throw ConfigError("model.feature_dim", "must be >= 1");

    const int epochs = get_int("train.epochs");
    if (epochs < 1) throw ConfigError("train.epochs", "must be >= 1");
    if (get_int("train.batch") < 1) throw ConfigError("train.batch", "must be >= 1");
    if (get_double("train.lr") <= 0.0) throw ConfigError("train.lr", "must be positive");
    const std::vector<int> milestones = get_int_list("train.milestones");
    for (std::size_t i = 0; i < milestones.size(); ++i) {
        if (milestones[i] < 1 || milestones[i] >= epochs)
            throw ConfigError("train.milestones", "milestones must lie in [1, epochs)");
        if (i > 0 && milestones[i] <= milestones[i - 1])
            throw ConfigError("train.milestones", "milestones must be strictly increasing");
    }
    if (get_double("loss.alpha") < 0.0) throw ConfigError("loss.alpha", "must be >= 0");
    if (get_double("loss.kd_temperature") <= 0.0)
        throw ConfigError("loss.kd_temperature", "must be positive");
    if (get_int("mgs.K") < 1) throw ConfigError("mgs.K", "must be >= 1");

    // Strategy names must parse.
    try {
        parse_generation(get_string("strategy.generation"));
    } catch (const ArgumentError& e) {
        throw ConfigError("strategy.generation", e.what());
    }
    try {
        parse_compensation(get_string("strategy.compensation"));
    } catch (const ArgumentError& e) {
        throw ConfigError("strategy.compensation", e.what());
    }
    if (has("sweep.generation"))
        for (const std::string& g : get_string_list("sweep.generation")) parse_generation(g);
    if (has("sweep.compensation"))
        for (const std::string& s : get_string_list("sweep.compensation")) parse_compensation(s);
}

std::string Config::canonical_text() const {
    std::ostringstream os;
    for (const auto& [key, value] : values_) {  // std::map iterates sorted
        if (is_sweep_key(key) || key == "train.seed") continue;
        os << key << "=" << value << "\n";
    }
    return os.str();
}

std::uint64_t Config::hash() const { return fnv1a_hash(canonical_text()); }

}  // namespace rfs
