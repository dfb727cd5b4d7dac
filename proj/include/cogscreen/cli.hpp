#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cogscreen::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kUsageError = 2;

// args excludes the program name. Errors go to `err` as one JSON object.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Replaces ${NAME} in every string value with the environment variable;
// an unset variable is a ConfigError naming the JSON pointer.
nlohmann::json interpolate_env(const nlohmann::json& config, const std::string& pointer = "");

// Throws ConfigError "unknown key at /a/b" for keys outside the schema.
void validate_config(const nlohmann::json& config);

// sha256 of the canonical (sorted-key) serialization, before interpolation.
std::string config_hash(const nlohmann::json& config);

// "1..5", "1,3,5" or "2".
std::vector<int> parse_multipliers(std::string_view text);
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

// Bundled lexicon / tagger directory: $COGSCREEN_DATA_DIR, else the source tree.
std::filesystem::path default_data_dir();

}  // namespace cogscreen::cli
