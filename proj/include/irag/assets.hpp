#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace irag::assets {

/// Text asset compiled in from `assets/` or `schema/`, e.g.
/// `prompts/generation_system.v1.txt`. Throws irag::Error if unknown.
std::string_view get(std::string_view name);

std::vector<std::string_view> names();

/// `name@fnv1a64:<hex>` of the asset content, used to attribute results to a
/// prompt revision.
std::string fingerprint(std::string_view name);

}  // namespace irag::assets
