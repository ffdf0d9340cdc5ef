#pragma once

#include "cyclemae/backbone.hpp"
#include "cyclemae/params.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace cyclemae::checkpoint {

/// Everything persisted by a training or fine-tuning run.
///
/// File layout: the 8-byte magic "CYCMAECK", a u32 format version, a u64
/// header length, a JSON header (configs, step, metadata, tensor table), then
/// the raw little-endian doubles of every tensor in table order.
struct Checkpoint {
    backbone::ModelConfig model_config;
    ParamSet params;  // model parameters in layout order
    std::int64_t step = 0;
    ParamSet extra;   // task heads, optimizer moments, ...
    std::map<std::string, std::string> metadata;
};

void save(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load(const std::filesystem::path& path);

/// Loads the model stored in `path`. Throws naming the first config field or
/// parameter (name or shape) that disagrees with `expected`.
backbone::Model load_model(const std::filesystem::path& path,
                           const backbone::ModelConfig& expected);

/// Model with the checkpoint's own config.
backbone::Model to_model(const Checkpoint& ckpt);

}  // namespace cyclemae::checkpoint
