#include "fallmon/kv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fallmon/errors.hpp"

namespace fallmon::kv {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::pair<std::string, std::string>> parse(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::set<std::string> seen;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;

        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        std::string key(trim(line.substr(0, eq)));
        std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        if (!seen.insert(key).second) {
            throw ConfigError("line " + std::to_string(line_no) + ": key '" + key + "' repeated");
        }
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

double parse_double(std::string_view key, std::string_view value) {
    value = trim(value);
    double out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (value.empty() || ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(out)) {
        throw ConfigError(std::string(key) + ": '" + std::string(value) + "' is not a number");
    }
    return out;
}

std::uint64_t parse_uint(std::string_view key, std::string_view value) {
    value = trim(value);
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
        throw ConfigError(std::string(key) + ": '" + std::string(value) + "' is not a non-negative integer");
    }
    return out;
}

std::uint16_t parse_port(std::string_view key, std::string_view value) {
    const auto v = parse_uint(key, value);
    if (v > 65535) throw ConfigError(std::string(key) + ": port " + std::to_string(v) + " out of range");
    return static_cast<std::uint16_t>(v);
}

bool parse_bool(std::string_view key, std::string_view value) {
    value = trim(value);
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError(std::string(key) + ": '" + std::string(value) + "' is not a boolean");
}

}  // namespace fallmon::kv
