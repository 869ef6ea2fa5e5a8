#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rfs/errors.hpp"

namespace rfs {

// Flat key/value experiment configuration with dotted section names. Keys
// are checked against a fixed schema; unknown keys and malformed values are
// field-level errors. Values stay strings until typed access.
class Config {
public:
    static Config defaults();
    static Config parse_text(const std::string& text);
    static Config parse_file(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::vector<int> get_int_list(const std::string& key) const;
    std::vector<std::string> get_string_list(const std::string& key) const;
    std::vector<std::uint64_t> get_u64_list(const std::string& key) const;

    // Environment variables named <prefix><key with dots replaced by
    // underscores> override file values.
    void apply_env_overrides(const std::string& prefix = "RFS_");

    // Presence of required fields plus range checks.
    void validate() const;

    // Sorted key=value lines over every effective (non-sweep, non-seed) key;
    // the basis of the config hash.
    std::string canonical_text() const;
    std::uint64_t hash() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

std::uint64_t fnv1a_hash(const std::string& text);

}  // namespace rfs
