#pragma once

// Flat key=value run configuration. One assignment per line, later
// assignments win, '#' starts a comment. Unknown keys are rejected so a typo
// cannot silently fall back to a default. The config hash covers every
// effective assignment except out_dir, making run manifests comparable across
// output locations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "thermrom/errors.hpp"
#include "thermrom/geometry.hpp"
#include "thermrom/util.hpp"

namespace thermrom {

inline const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys = {
        // grid
        "nx", "ny", "nz_heat", "nz_sub", "len_x", "len_y", "t_heat", "t_sub",
        // materials and boundary
        "k_heat", "k_sub", "rhoc_heat", "rhoc_sub", "h", "t_amb",
        // time discretization
        "dt", "train_duration", "eval_duration", "snapshot_every",
        // inputs
        "floorplan", "train_trace", "eval_trace", "train_synth", "eval_synth", "seed",
        // model reduction
        "modes", "mode_count", "snapshots", "basis",
        // stage selection
        "fom_which", "rom_which", "recon_every", "recon_regions", "eval_windows",
        // probing
        "probe_input", "probe_ref", "probe_kind", "probe_x", "probe_y", "probe_layer",
        "probe_axis", "probe_offset", "probe_record",
        // output
        "out_dir",
    };
    return keys;
}

class RunConfig {
public:
    void assign(const std::string& key, const std::string& value) {
        if (!known_config_keys().count(key)) throw validation_error("config: unknown key '" + key + "'");
        values_[key] = value;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw validation_error("config: missing required key '" + key + "'");
        return it->second;
    }
    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key) const { return parse_double(get_string(key), "config key " + key); }
    double get_double(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    long long get_int(const std::string& key) const { return parse_int(get_string(key), "config key " + key); }
    long long get_int(const std::string& key, long long fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        if (!has(key)) return fallback;
        const long long v = get_int(key);
        if (v < 0) throw validation_error("config: key '" + key + "' must be nonnegative");
        return static_cast<std::uint64_t>(v);
    }

    std::vector<double> get_double_list(const std::string& key) const {
        std::vector<double> out;
        for (const auto& part : split(get_string(key), ','))
            out.push_back(parse_double(trim(part), "config key " + key));
        if (out.empty()) throw validation_error("config: key '" + key + "' has no entries");
        return out;
    }

    std::vector<std::size_t> get_size_list(const std::string& key) const {
        std::vector<std::size_t> out;
        for (const auto& part : split(get_string(key), ',')) {
            const long long v = parse_int(trim(part), "config key " + key);
            if (v <= 0) throw validation_error("config: key '" + key + "' entries must be positive");
            out.push_back(static_cast<std::size_t>(v));
        }
        if (out.empty()) throw validation_error("config: key '" + key + "' has no entries");
        return out;
    }

    std::vector<std::string> get_string_list(const std::string& key) const {
        std::vector<std::string> out;
        for (const auto& part : split(get_string(key), ',')) {
            const std::string item = trim(part);
            if (!item.empty()) out.push_back(item);
        }
        if (out.empty()) throw validation_error("config: key '" + key + "' has no entries");
        return out;
    }

    // Hash of every effective assignment except out_dir, in sorted key order.
    std::uint64_t hash() const {
        Fnv1a h;
        h.update_string("config-v1");
        for (const auto& [key, value] : values_) {
            if (key == "out_dir") continue;
            h.update_string(key);
            h.update_string("=");
            h.update_string(value);
            h.update_string("\n");
        }
        return h.digest();
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

inline RunConfig parse_config(const std::string& text, const std::string& what) {
    RunConfig config;
    std::size_t line_no = 0;
    for (const auto& raw_line : split(text, '\n')) {
        ++line_no;
        std::string line = raw_line;
        const auto comment = line.find('#');
        if (comment != std::string::npos) line.erase(comment);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw validation_error(what + ":" + std::to_string(line_no) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw validation_error(what + ":" + std::to_string(line_no) + ": empty key");
        try {
            config.assign(key, value);
        } catch (const validation_error& e) {
            throw validation_error(what + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return config;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    return parse_config(read_text_file(path), path.string());
}

// Whole-step count for a duration; the division must be exact to within 1e-9
// relative so a config cannot silently truncate part of a window.
inline std::size_t steps_from_duration(double duration, double dt, const std::string& what) {
    if (!(dt > 0.0)) throw validation_error(what + ": dt must be > 0");
    if (!(duration > 0.0)) throw validation_error(what + ": duration must be > 0");
    const double ratio = duration / dt;
    const auto n = static_cast<long long>(std::llround(ratio));
    if (n < 1 || std::abs(duration - static_cast<double>(n) * dt) > 1e-9 * duration)
        throw validation_error(what + ": duration " + format_double(duration) +
                               " is not a whole multiple of dt " + format_double(dt));
    return static_cast<std::size_t>(n);
}

} // namespace thermrom
