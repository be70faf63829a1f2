#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sqt/errors.hpp"

namespace sqt::app {

/// One configuration value and where it came from ("run.cfg:12", "--rho", "SQT_SEED").
struct ConfigEntry {
    std::string value;
    std::string origin;
};

/// Flat, string-valued configuration with typed accessors. Every parse error
/// names the key and the origin of its value.
class Config {
public:
    void set(std::string key, std::string value, std::string origin) {
        key = normalize_key(key);
        entries_[key] = ConfigEntry{std::move(value), std::move(origin)};
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }
    const std::map<std::string, ConfigEntry>& entries() const { return entries_; }

    /// Rejects keys outside `allowed` (typos would otherwise be silently ignored).
    void require_known(const std::set<std::string>& allowed, const std::string& command) const {
        for (const auto& [key, entry] : entries_)
            if (!allowed.count(key))
                throw ConfigError(entry.origin + ": unknown key '" + key + "' for command " + command);
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? fallback : trim(it->second.value);
    }

    double get_double(const std::string& key, double fallback) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        return parse_double(it->second.value, key, it->second.origin);
    }

    std::optional<double> get_optional_double(const std::string& key) const {
        if (!has(key)) return std::nullopt;
        return get_double(key, 0.0);
    }

    long get_int(const std::string& key, long fallback) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        const std::string v = trim(it->second.value);
        long out = 0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc() || res.ptr != v.data() + v.size())
            throw ConfigError(where(key, it->second.origin) + ": expected an integer, got '" + v + "'");
        return out;
    }

    std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        const std::string v = trim(it->second.value);
        std::uint64_t out = 0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc() || res.ptr != v.data() + v.size())
            throw ConfigError(where(key, it->second.origin) + ": expected a non-negative integer, got '" + v + "'");
        return out;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        const std::string v = lower(trim(it->second.value));
        if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
        if (v == "0" || v == "false" || v == "no" || v == "off") return false;
        throw ConfigError(where(key, it->second.origin) + ": expected a boolean, got '" + v + "'");
    }

    /// Comma-separated numbers; an item "a:b:h" expands to a, a+h, ... up to b inclusive.
    std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        return parse_list(it->second.value, key, it->second.origin);
    }

    /// Throws ConfigError naming the field unless `ok`.
    void require(bool ok, const std::string& key, const std::string& message) const {
        if (ok) return;
        const auto it = entries_.find(key);
        throw ConfigError(where(key, it == entries_.end() ? std::string("default") : it->second.origin) + ": " +
                          message);
    }

    static std::string normalize_key(std::string key) {
        key = trim(key);
        for (auto& c : key)
            if (c == '-') c = '_';
        return key;
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

private:
    static std::string lower(std::string s) {
        for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return s;
    }

    static std::string where(const std::string& key, const std::string& origin) {
        return origin + ": field '" + key + "'";
    }

    static double parse_double(const std::string& raw, const std::string& key, const std::string& origin) {
        const std::string v = trim(raw);
        char* end = nullptr;
        const double x = std::strtod(v.c_str(), &end);
        if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(x))
            throw ConfigError(where(key, origin) + ": expected a finite number, got '" + v + "'");
        return x;
    }

    static std::vector<double> parse_list(const std::string& raw, const std::string& key, const std::string& origin) {
        std::vector<double> out;
        std::stringstream ss(raw);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            const auto c1 = item.find(':');
            if (c1 == std::string::npos) {
                out.push_back(parse_double(item, key, origin));
                continue;
            }
            const auto c2 = item.find(':', c1 + 1);
            if (c2 == std::string::npos)
                throw ConfigError(where(key, origin) + ": range '" + item + "' must be start:stop:step");
            const double a = parse_double(item.substr(0, c1), key, origin);
            const double b = parse_double(item.substr(c1 + 1, c2 - c1 - 1), key, origin);
            const double h = parse_double(item.substr(c2 + 1), key, origin);
            if (!(h > 0.0) || b < a)
                throw ConfigError(where(key, origin) + ": range '" + item + "' needs step > 0 and stop >= start");
            const long n = static_cast<long>(std::floor((b - a) / h + 1e-9));
            if (n > 1000000) throw ConfigError(where(key, origin) + ": range '" + item + "' is too long");
            for (long k = 0; k <= n; ++k) out.push_back(a + static_cast<double>(k) * h);
        }
        if (out.empty()) throw ConfigError(where(key, origin) + ": empty list");
        return out;
    }

    std::map<std::string, ConfigEntry> entries_;
};

/// key = value lines; '#' starts a comment.
inline void parse_key_value_text(Config& cfg, const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = Config::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string origin = source + ":" + std::to_string(number);
        if (eq == std::string::npos) throw ConfigError(origin + ": expected 'key = value', got '" + line + "'");
        const std::string key = Config::trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError(origin + ": missing key");
        cfg.set(key, Config::trim(line.substr(eq + 1)), origin);
    }
}

namespace detail {

inline std::string json_scalar(const nlohmann::json& v, const std::string& origin) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
    if (v.is_number_float()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
        return buf;
    }
    throw ConfigError(origin + ": values must be numbers, strings, booleans or arrays of numbers");
}

}  // namespace detail

/// A flat JSON object; arrays become comma-separated lists.
inline void parse_json_text(Config& cfg, const std::string& text, const std::string& source) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(source + ": invalid JSON: " + e.what());
    }
    if (!doc.is_object()) throw ConfigError(source + ": top level must be an object");
    for (const auto& [key, value] : doc.items()) {
        const std::string origin = source + ":" + key;
        if (value.is_array()) {
            std::string joined;
            for (const auto& x : value) {
                if (!joined.empty()) joined += ",";
                joined += detail::json_scalar(x, origin);
            }
            cfg.set(key, joined, origin);
        } else {
            cfg.set(key, detail::json_scalar(value, origin), origin);
        }
    }
}

/// Loads key = value or JSON (by extension or a leading '{').
inline void load_config_file(Config& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const std::string head = Config::trim(text);
    const bool json = (path.size() > 5 && path.substr(path.size() - 5) == ".json") || (!head.empty() && head[0] == '{');
    if (json) parse_json_text(cfg, text, path);
    else parse_key_value_text(cfg, text, path);
}

/// "--key value" or "--key=value" pairs.
inline void apply_overrides(Config& cfg, const std::vector<std::string>& args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a.rfind("--", 0) != 0 || a.size() < 3) throw ConfigError("unexpected argument '" + a + "'");
        const auto eq = a.find('=');
        if (eq != std::string::npos) {
            cfg.set(a.substr(2, eq - 2), a.substr(eq + 1), a.substr(0, eq));
            continue;
        }
        if (i + 1 >= args.size()) throw ConfigError(a + ": missing value");
        cfg.set(a.substr(2), args[i + 1], a);
        ++i;
    }
}

/// SQT_SEED replaces the master seed from the config file.
inline void apply_environment(Config& cfg) {
    if (const char* seed = std::getenv("SQT_SEED"); seed && *seed) cfg.set("seed", seed, "SQT_SEED");
}

}  // namespace sqt::app
