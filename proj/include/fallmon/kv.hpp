#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// `key = value` text files: one pair per line, `#` starts a comment.
namespace fallmon::kv {

std::string_view trim(std::string_view s);

/// Pairs in file order. Malformed lines and repeated keys raise ConfigError.
std::vector<std::pair<std::string, std::string>> parse(std::string_view text);
std::vector<std::pair<std::string, std::string>> load(const std::string& path);

double parse_double(std::string_view key, std::string_view value);
std::uint64_t parse_uint(std::string_view key, std::string_view value);
std::uint16_t parse_port(std::string_view key, std::string_view value);
bool parse_bool(std::string_view key, std::string_view value);

}  // namespace fallmon::kv
