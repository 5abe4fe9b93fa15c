#pragma once

// Flat "key=value" text records: one entry per line, '#' starts a comment,
// blank lines ignored, key order preserved. Used for certificates,
// calibration reports, sidecars, run reports and configuration files.

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hqrng/error.hpp"

namespace hqrng {

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

class KeyValueDoc {
public:
    using Entry = std::pair<std::string, std::string>;

    static KeyValueDoc parse(std::string_view text, const std::string& origin = "<text>") {
        KeyValueDoc doc;
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            std::size_t end = text.find('\n', pos);
            if (end == std::string_view::npos) end = text.size();
            std::string_view line = text.substr(pos, end - pos);
            pos = end + 1;
            ++line_no;
            if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string_view::npos)
                throw ValidationError(origin + ":" + std::to_string(line_no) + ": expected key=value");
            std::string key(trim(line.substr(0, eq)));
            if (key.empty())
                throw ValidationError(origin + ":" + std::to_string(line_no) + ": empty key");
            doc.set(key, std::string(trim(line.substr(eq + 1))));
        }
        return doc;
    }

    static KeyValueDoc load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw StageError("io", "cannot open " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw StageError("io", "cannot write " + path);
        out << str();
        if (!out) throw StageError("io", "write failed for " + path);
    }

    /// Later assignments to the same key overwrite in place.
    void set(const std::string& key, std::string value) {
        for (auto& [k, v] : entries_) {
            if (k == key) {
                v = std::move(value);
                return;
            }
        }
        entries_.emplace_back(key, std::move(value));
    }
    void set(const std::string& key, double value) { set(key, format_double(value)); }
    void set(const std::string& key, long long value) { set(key, std::to_string(value)); }
    void set(const std::string& key, unsigned long long value) { set(key, std::to_string(value)); }
    void set(const std::string& key, int value) { set(key, std::to_string(value)); }
    void set(const std::string& key, std::size_t value) { set(key, std::to_string(value)); }
    void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }
    void set(const std::string& key, const char* value) { set(key, std::string(value)); }

    void comment(std::string text) { entries_.emplace_back("#", std::move(text)); }

    void merge(const KeyValueDoc& other, const std::string& prefix = "") {
        for (const auto& [k, v] : other.entries_) {
            if (k == "#") continue;
            set(prefix + k, v);
        }
    }

    bool has(const std::string& key) const { return find(key) != nullptr; }

    std::optional<std::string> get(const std::string& key) const {
        if (const auto* v = find(key)) return *v;
        return std::nullopt;
    }

    const std::string& at(const std::string& key) const {
        if (const auto* v = find(key)) return *v;
        throw ValidationError("missing key '" + key + "'");
    }

    double number(const std::string& key) const { return to_double(at(key), key); }
    double number_or(const std::string& key, double fallback) const {
        const auto* v = find(key);
        return v ? to_double(*v, key) : fallback;
    }
    long long integer(const std::string& key) const { return to_int(at(key), key); }

    std::vector<std::string> keys() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : entries_)
            if (k != "#") out.push_back(k);
        return out;
    }

    const std::vector<Entry>& entries() const noexcept { return entries_; }

    std::string str() const {
        std::string out;
        for (const auto& [k, v] : entries_) {
            if (k == "#") {
                out += "# " + v + "\n";
            } else {
                out += k + "=" + v + "\n";
            }
        }
        return out;
    }

    static double to_double(const std::string& s, const std::string& key) {
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (s.empty() || end != s.c_str() + s.size())
            throw ValidationError("key '" + key + "': not a number: '" + s + "'");
        return v;
    }

    static long long to_int(const std::string& s, const std::string& key) {
        long long v = 0;
        const auto* first = s.data();
        const auto* last = s.data() + s.size();
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last)
            throw ValidationError("key '" + key + "': not an integer: '" + s + "'");
        return v;
    }

private:
    static std::string_view trim(std::string_view s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string_view::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    const std::string* find(const std::string& key) const {
        for (const auto& [k, v] : entries_)
            if (k == key) return &v;
        return nullptr;
    }

    std::vector<Entry> entries_;
};

}  // namespace hqrng
