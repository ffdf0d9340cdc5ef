#pragma once

#include "cyclemae/adapt_eval.hpp"
#include "cyclemae/backbone.hpp"
#include "cyclemae/pretrain.hpp"
#include "cyclemae/video.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cyclemae::config {

/// Synthetic corpus and its on-disk location. Items are assigned to splits
/// by position: the last test_fraction of the corpus is test, the
/// val_fraction before it is val, the rest train.
struct DataConfig {
    std::filesystem::path dir = "data";
    video::CorpusSpec corpus;
    double val_fraction = 0.1;
    double test_fraction = 0.2;
    bool write_masks = true;

    std::filesystem::path manifest() const { return dir / "manifest.tsv"; }
    video::Split split_of(int index) const;
};

struct OutputConfig {
    std::filesystem::path dir = "runs/default";
    /// Encoder used by finetune; empty = <dir>/pretrain/final.ckpt, "random" =
    /// a freshly initialised model.
    std::string init_checkpoint;

    std::filesystem::path pretrain_dir() const { return dir / "pretrain"; }
    std::filesystem::path finetune_dir() const { return dir / "finetune"; }
    std::filesystem::path ablation_dir() const { return dir / "ablation"; }
};

/// Grid swept by the ablate subcommand.
struct AblationConfig {
    std::vector<double> mask_ratios{0.25, 0.5, 0.75, 0.9};
    std::vector<std::array<int, 3>> patch_sizes{{8, 8, 2}, {8, 8, 4}, {16, 16, 2}, {16, 16, 4}};
    /// Patch size used for the ratio sweep and ratio used for the patch sweep.
    std::array<int, 3> reference_patch{16, 16, 4};
    double reference_ratio = 0.75;
};

struct RunConfig {
    DataConfig data;
    backbone::ModelConfig model;
    pretrain::TrainConfig pretrain;
    adapt::FinetuneConfig finetune;
    OutputConfig output;
    AblationConfig ablation;
};

/// Parses and validates a JSON run configuration. Every key is checked;
/// unknown keys and bad values fail with the key path named. Relative paths
/// are resolved against `base_dir`.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical JSON of a configuration (all keys, resolved paths).
std::string to_json(const RunConfig& cfg);

/// Sets the data, pretrain and finetune seeds.
void override_seed(RunConfig& cfg, std::uint64_t seed);

}  // namespace cyclemae::config
