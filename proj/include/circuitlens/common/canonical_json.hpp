#pragma once

#include <string>

#include "json.hpp"

namespace circuitlens {

/// Serializes `value` with sorted object keys, two-space indentation and every
/// floating-point number printed with 17 significant digits, so equal values
/// always produce byte-identical text. Integers print as integers.
std::string canonical_dump(const nlohmann::json& value);

}  // namespace circuitlens
