#pragma once

#include "vmpt/types.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace vmpt {

/// Line-oriented `key = value` configuration with `#` comments. Values are
/// kept as raw strings; typed getters report the file and line on errors.
class Config {
public:
    Config() = default;

    static Config parse(std::istream& is, const std::string& source = "<stream>") {
        Config cfg;
        cfg.source_ = source;
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError(source + ":" + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + trimmed + "'");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty())
                throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
            cfg.entries_[key] = {value, lineno};
        }
        return cfg;
    }

    static Config parse_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open config file '" + path + "'");
        return parse(f, path);
    }

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    void set(const std::string& key, const std::string& value) { entries_[key] = {value, 0}; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? fallback : it->second.value;
    }

    double get_double(const std::string& key, double fallback) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        return to_double(key, it->second);
    }

    int get_int(const std::string& key, int fallback) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        const double v = to_double(key, it->second);
        const int i = static_cast<int>(v);
        if (static_cast<double>(i) != v)
            throw ConfigError(location(key, it->second) + ": expected an integer, got '" +
                              it->second.value + "'");
        return i;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        const std::string& v = it->second.value;
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError(location(key, it->second) + ": expected a boolean, got '" + v + "'");
    }

    std::vector<double> get_list(const std::string& key) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return {};
        std::istringstream ss(it->second.value);
        std::vector<double> out;
        std::string tok;
        while (ss >> tok) {
            char* end = nullptr;
            const double v = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0')
                throw ConfigError(location(key, it->second) + ": '" + tok + "' is not a number");
            out.push_back(v);
        }
        return out;
    }

    std::vector<std::string> get_words(const std::string& key) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return {};
        std::istringstream ss(it->second.value);
        std::vector<std::string> out;
        std::string tok;
        while (ss >> tok) out.push_back(tok);
        return out;
    }

    const std::map<std::string, std::pair<std::string, int>> raw() const {
        std::map<std::string, std::pair<std::string, int>> out;
        for (const auto& [k, e] : entries_) out[k] = {e.value, e.line};
        return out;
    }

private:
    struct Entry {
        std::string value;
        int line = 0;
    };

    static std::string trim(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    std::string location(const std::string& key, const Entry& e) const {
        return source_ + ":" + std::to_string(e.line) + ": key '" + key + "'";
    }

    double to_double(const std::string& key, const Entry& e) const {
        char* end = nullptr;
        const double v = std::strtod(e.value.c_str(), &end);
        if (end == e.value.c_str() || *end != '\0')
            throw ConfigError(location(key, e) + ": '" + e.value + "' is not a number");
        return v;
    }

    std::string source_ = "<empty>";
    std::map<std::string, Entry> entries_;
};

} // namespace vmpt
