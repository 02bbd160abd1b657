#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "clearway/errors.hpp"
#include "clearway/tuning.hpp"

namespace clearway {

// Flat `key = value` configuration text. Lines starting with '#' and blank
// lines are skipped; later duplicates win. Search-space dimensions use
// `space.<param> = <int|real|log> <lo> <hi>`.
class ConfigFile {
public:
    ConfigFile() = default;

    static ConfigFile parse(const std::string& text) {
        ConfigFile cfg;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string trimmed = trim(line);
            if (trimmed.empty() || trimmed[0] == '#') continue;
            const std::size_t eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw Error("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty())
                throw Error("config line " + std::to_string(lineno) + ": empty key");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static ConfigFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoFailure("cannot read config file " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t used = 0;
            const double v = std::stod(it->second, &used);
            if (used != it->second.size()) throw Error("");
            return v;
        } catch (const std::exception&) {
            throw Error("config key " + key + ": expected a number, got '" + it->second + "'");
        }
    }

    int get_int(const std::string& key, int fallback) const {
        const double v = get_double(key, static_cast<double>(fallback));
        const int i = static_cast<int>(v);
        if (static_cast<double>(i) != v)
            throw Error("config key " + key + ": expected an integer");
        return i;
    }

    std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(it->second, &used);
            if (used != it->second.size()) throw Error("");
            return static_cast<std::uint64_t>(v);
        } catch (const std::exception&) {
            throw Error("config key " + key + ": expected a non-negative integer, got '" +
                        it->second + "'");
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw Error("config key " + key + ": expected true/false, got '" + it->second + "'");
    }

    // All `space.*` keys assembled into a SearchSpace.
    SearchSpace search_space() const {
        SearchSpace space;
        for (const auto& [key, value] : values_) {
            if (key.rfind("space.", 0) != 0) continue;
            const std::string name = key.substr(6);
            if (name.empty()) throw Error("config key " + key + ": missing dimension name");
            std::istringstream ss(value);
            std::string kind;
            double lo = 0.0, hi = 0.0;
            if (!(ss >> kind >> lo >> hi))
                throw Error("config key " + key + ": expected '<int|real|log> <lo> <hi>'");
            std::string extra;
            if (ss >> extra)
                throw Error("config key " + key + ": trailing text '" + extra + "'");
            if (kind == "int")
                space.dims[name] = ParamRange::ints(static_cast<int>(lo), static_cast<int>(hi));
            else if (kind == "real")
                space.dims[name] = ParamRange::reals(lo, hi);
            else if (kind == "log")
                space.dims[name] = ParamRange::log_reals(lo, hi);
            else
                throw Error("config key " + key + ": unknown range kind '" + kind + "'");
        }
        return space;
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        std::size_t b = 0, e = s.size();
        while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
        while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
        return s.substr(b, e - b);
    }

    std::map<std::string, std::string> values_;
};

}  // namespace clearway
