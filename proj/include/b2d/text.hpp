#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace b2d::text {

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

// Locale-independent conversions; nullopt when the whole token is not a number.
std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

// Shortest representation that round-trips exactly.
std::string format_double(double v);

// 64-bit FNV-1a, stable across platforms.
std::uint64_t fnv1a(std::string_view s);

}  // namespace b2d::text
