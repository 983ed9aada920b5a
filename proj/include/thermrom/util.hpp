#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "thermrom/errors.hpp"

namespace thermrom {

// 64-bit FNV-1a. Used for grid and config fingerprints; stable across
// platforms because doubles enter as their IEEE-754 bit patterns.
class Fnv1a {
public:
    void update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            hash_ ^= p[i];
            hash_ *= 1099511628211ULL;
        }
    }
    void update_u64(std::uint64_t v) {
        unsigned char bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
        update(bytes, 8);
    }
    void update_f64(double v) { update_u64(std::bit_cast<std::uint64_t>(v)); }
    void update_string(std::string_view s) { update(s.data(), s.size()); }
    std::uint64_t digest() const { return hash_; }

private:
    std::uint64_t hash_ = 1469598103934665603ULL;
};

// splitmix64: stateless, portable generator used for synthetic power traces.
// Random access by construction, so trace values never depend on evaluation
// order.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Uniform in [0, 1) with 53 random bits.
inline double unit_double(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Shortest round-trip decimal form; CSV artifacts stay byte-stable.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string format_hex_u64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf, 16);
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline double parse_double(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    double v = 0;
    auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
        throw validation_error(what + ": not a number: '" + t + "'");
    return v;
}

inline long long parse_int(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    long long v = 0;
    auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
        throw validation_error(what + ": not an integer: '" + t + "'");
    return v;
}

// Writes via a sibling temp file plus rename so readers never observe a
// partially written artifact.
class AtomicFileWriter {
public:
    explicit AtomicFileWriter(const std::filesystem::path& target)
        : target_(target), tmp_(target.string() + ".tmp") {
        if (target.has_parent_path()) {
            std::error_code ec;
            std::filesystem::create_directories(target.parent_path(), ec);
        }
        stream_.open(tmp_, std::ios::binary | std::ios::trunc);
        if (!stream_) throw io_error("cannot open for writing: " + tmp_.string());
    }
    ~AtomicFileWriter() {
        if (!committed_) {
            stream_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_, ec);
        }
    }
    std::ofstream& stream() { return stream_; }
    void write(const void* data, std::size_t n) {
        stream_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    }
    void commit() {
        stream_.flush();
        if (!stream_) throw io_error("write failed: " + tmp_.string());
        stream_.close();
        std::error_code ec;
        std::filesystem::rename(tmp_, target_, ec);
        if (ec) throw io_error("cannot rename " + tmp_.string() + " -> " + target_.string());
        committed_ = true;
    }

private:
    std::filesystem::path target_;
    std::filesystem::path tmp_;
    std::ofstream stream_;
    bool committed_ = false;
};

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
    AtomicFileWriter w(path);
    w.write(content.data(), content.size());
    w.commit();
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open: " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

} // namespace thermrom
