#pragma once

#include <string_view>

#include "json.hpp"

namespace circuitlens::cli {

/// Runs one pipeline command with a resolved config (see resolve_config).
/// Artifacts go under config["out"] together with resolved_config.json.
/// Returns a JSON summary of what was produced; errors propagate as
/// circuitlens::Error.
nlohmann::json run_command(std::string_view command, const nlohmann::json& config);

}  // namespace circuitlens::cli
