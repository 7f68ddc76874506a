#include "irag/assets.hpp"

#include <algorithm>
#include <utility>

#include "irag/errors.hpp"
#include "irag/util.hpp"

namespace irag::assets {

namespace detail {
const std::pair<std::string_view, std::string_view>* table_begin();
const std::pair<std::string_view, std::string_view>* table_end();
}  // namespace detail

std::string_view get(std::string_view name) {
    const auto* end = detail::table_end();
    const auto* it = std::find_if(detail::table_begin(), end,
                                  [&](const auto& entry) { return entry.first == name; });
    if (it == end) throw Error("unknown asset: " + std::string(name));
    return it->second;
}

std::vector<std::string_view> names() {
    std::vector<std::string_view> out;
    for (const auto* it = detail::table_begin(); it != detail::table_end(); ++it) {
        out.push_back(it->first);
    }
    return out;
}

std::string fingerprint(std::string_view name) {
    return std::string(name) + "@fnv1a64:" + hex64(fnv1a64(get(name)));
}

}  // namespace irag::assets
