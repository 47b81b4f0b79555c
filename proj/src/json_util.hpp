#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "hit/common.hpp"

namespace hit::detail {

using nlohmann::json;

// Strict object access: unknown keys are configuration errors, reported with
// their full field path.
inline void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed,
                                const std::string& path) {
    if (!obj.is_object()) throw ConfigError(path + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const auto& k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError(path + "." + it.key() + ": unknown key");
    }
}

template <typename T>
T get_field(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.contains(key)) throw ConfigError(path + "." + key + ": missing");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + "." + key + ": wrong type");
    }
}

template <typename T>
T get_field_or(const json& obj, const std::string& key, const std::string& path, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + "." + key + ": wrong type");
    }
}

}  // namespace hit::detail
