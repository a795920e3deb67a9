#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace b2d::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

// Runs the command line (without the program name); never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Flat "key = value" text; '#' starts a comment. Throws ConfigError on
// malformed lines or duplicate keys.
std::map<std::string, std::string> parse_config_text(std::string_view text, const std::string& source);
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

}  // namespace b2d::cli
