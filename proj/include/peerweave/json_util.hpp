#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "peerweave/errors.hpp"

namespace peerweave::jsonu {

using nlohmann::json;

inline void expect_object(const json& j, const char* what) {
    if (!j.is_object()) {
        throw ConfigError(std::string(what) + ": expected a JSON object");
    }
}

// Strict field-set check: every key must be in `allowed`.
inline void check_fields(const json& j, std::initializer_list<std::string_view> allowed,
                         const char* what) {
    expect_object(j, what);
    for (const auto& item : j.items()) {
        bool known = false;
        for (auto a : allowed) {
            if (item.key() == a) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigError(std::string(what) + ": unknown field \"" + item.key() + "\"");
        }
    }
}

template <typename T>
T get_req(const json& j, const char* key, const char* what) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw ConfigError(std::string(what) + ": missing field \"" + key + "\"");
    }
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string(what) + ": field \"" + key + "\" has the wrong type");
    }
}

template <typename T>
T get_opt(const json& j, const char* key, T fallback, const char* what) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        return fallback;
    }
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string(what) + ": field \"" + key + "\" has the wrong type");
    }
}

}  // namespace peerweave::jsonu
