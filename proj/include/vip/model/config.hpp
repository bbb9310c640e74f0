#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "vip/model/types.hpp"

namespace vip {

/// Parse a JSON configuration (comments allowed). Empty or whitespace-only
/// text yields the defaults. Throws ConfigError for syntax errors, unknown
/// keys and mistyped fields; ValidationError when the result breaks an
/// invariant.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Full echo of every field; parse_config(to_json(c).dump()) == c.
nlohmann::json to_json(const RunConfig& cfg);

/// SHA-256 of the canonical echo.
std::string config_digest(const RunConfig& cfg);

std::string_view to_string(ResolutionScaling s);
std::string_view to_string(Normalization n);
std::string_view to_string(LimitMethod m);

}  // namespace vip
