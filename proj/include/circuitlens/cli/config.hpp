#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace circuitlens::cli {

std::string_view tool_version();

/// Defaults for every key a command accepts. The JSON type of each default
/// (number, string, array, boolean, or null for "unset") is the type the key
/// must have.
nlohmann::json command_defaults(std::string_view command);
std::vector<std::string> command_names();

/// defaults <- file <- overrides. Throws ValidationError listing every
/// unknown key and every type mismatch in `details`.
nlohmann::json resolve_config(std::string_view command, const nlohmann::json& file, const nlohmann::json& overrides);

/// Reads a JSON object from `path` (ParseError on malformed text). A
/// resolved_config.json is unwrapped to its "config" object.
nlohmann::json read_config_file(const std::filesystem::path& path);

/// Writes `<dir>/resolved_config.json` with the command, tool version and the
/// resolved keys.
void write_resolved_config(const std::filesystem::path& dir, std::string_view command, const nlohmann::json& config);

}  // namespace circuitlens::cli
