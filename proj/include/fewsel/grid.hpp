#pragma once

#include <map>
#include <string>
#include <vector>

#include "fewsel/error.hpp"

namespace fewsel {

// Cartesian product over named axes. Axis order is lexicographic (std::map
// order); the last axis varies fastest. Ids are canonical "axis=value&..."
// strings so caches keyed on them stay stable across runs.
inline std::vector<std::string> enumerate_grid(const std::map<std::string, std::vector<std::string>>& axes) {
    if (axes.empty()) throw ConfigError("enumerate_grid: no axes");
    for (const auto& [name, values] : axes)
        if (values.empty()) throw ConfigError("enumerate_grid: axis '" + name + "' is empty");

    std::vector<std::string> ids{""};
    for (const auto& [name, values] : axes) {
        std::vector<std::string> next;
        next.reserve(ids.size() * values.size());
        for (const auto& prefix : ids)
            for (const auto& value : values)
                next.push_back(prefix.empty() ? name + "=" + value : prefix + "&" + name + "=" + value);
        ids = std::move(next);
    }
    return ids;
}

} // namespace fewsel
