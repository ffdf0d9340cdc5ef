#pragma once

// Strict JSON helpers shared by the config and checkpoint readers.

#include "cyclemae/backbone.hpp"
#include "cyclemae/pretrain.hpp"

#include "json.hpp"

#include <set>
#include <stdexcept>
#include <string>

namespace cyclemae::detail {

using json = nlohmann::json;

/// Reads keys of one JSON object, remembering which were consumed so that
/// finish() can reject anything unrecognised. Errors name the full key path.
class ObjectReader {
public:
    ObjectReader(const json& object, std::string path);

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        const auto it = object_.find(key);
        if (it == object_.end()) {
            return;
        }
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw std::invalid_argument("config key '" + child(key) + "' has the wrong type");
        }
    }

    template <typename T>
    void require(const char* key, T& out) {
        if (!has(key)) {
            throw std::invalid_argument("config key '" + child(key) + "' is required");
        }
        get(key, out);
    }

    bool has(const char* key) const { return object_.contains(key); }
    const json* section(const char* key);
    std::string child(const std::string& key) const;
    void finish() const;

private:
    const json& object_;
    std::string path_;
    std::set<std::string> seen_;
};

json to_json(const backbone::ModelConfig& cfg);
backbone::ModelConfig model_config_from_json(const json& j, const std::string& path);

json to_json(const pretrain::TrainConfig& cfg);
pretrain::TrainConfig train_config_from_json(const json& j, const std::string& path);

}  // namespace cyclemae::detail
