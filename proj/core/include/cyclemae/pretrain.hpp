#pragma once

#include "cyclemae/backbone.hpp"
#include "cyclemae/checkpoint.hpp"
#include "cyclemae/objective.hpp"
#include "cyclemae/optimizer.hpp"
#include "cyclemae/video.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cyclemae::pretrain {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 8;
    double learning_rate = 1.5e-4;
    double weight_decay = 0.05;
    int warmup_steps = 100;
    std::uint64_t seed = 0;
    bool enable_contrastive = true;
    double alpha = 0.5;
    double mask_ratio = 0.75;
    int adjacency_window = 1;
    /// Write a checkpoint every this many updates (0 = final only).
    int checkpoint_every = 0;
    /// Fraction of all updates trained with L_r only before L_c switches on.
    double recon_warm_fraction = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.95;
    /// Stop after this many updates in total (0 = run every epoch).
    std::int64_t stop_after = 0;

    void validate() const;
    objective::ObjectiveConfig objective() const;
    AdamWConfig optimizer() const;
};

/// One log record per optimizer update. Losses are batch means; counts are
/// batch totals.
struct StepRecord {
    std::int64_t step = 0;  // 1-based update index
    int epoch = 0;
    double lr = 0.0;
    objective::LossReport loss;
};

/// JSON line: step, epoch, lr, L_r, L_c, L_total, triplet_count, skipped_anchors.
std::string to_json_line(const StepRecord& record);

struct TrainState {
    backbone::Model model;
    AdamW optimizer;
    std::int64_t step = 0;
};

/// Fresh state: model initialised from derive_seed(cfg.seed, ...) and zeroed moments.
TrainState initial_state(const TrainConfig& cfg, const backbone::ModelConfig& model_cfg);

struct TrainingClip {
    tokenizer::PatchGrid grid;
    std::string id;
};

/// Rejects (naming the clip) anything that cannot be a pretraining input:
/// wrong shape or channel count, or fewer frames than one full cycle.
void check_training_clip(const video::VideoClip& clip, const backbone::ModelConfig& cfg,
                         const std::string& id);

std::vector<TrainingClip> prepare_clips(const std::vector<video::VideoClip>& clips,
                                        const backbone::ModelConfig& cfg);

/// Updates per epoch for n clips.
std::int64_t steps_per_epoch(const TrainConfig& cfg, std::size_t clips);

/// Data order of one epoch: a permutation of [0, n) seeded by (seed, epoch).
std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n);

struct RunOptions {
    /// Directory for checkpoints and the log; empty = keep everything in memory.
    std::filesystem::path output_dir;
    std::function<void(const StepRecord&)> on_step;
};

/// Continues `state` until the configured number of epochs (or stop_after)
/// is reached. Every random choice derives from (seed, step, sample), so a
/// run resumed from a checkpoint matches the uninterrupted run bitwise.
std::vector<StepRecord> train(TrainState& state, const TrainConfig& cfg,
                              const std::vector<TrainingClip>& clips, const RunOptions& options);

/// Fresh run: initial_state + train.
TrainState run_pretraining(const TrainConfig& cfg, const backbone::ModelConfig& model_cfg,
                           const std::vector<TrainingClip>& clips, const RunOptions& options,
                           std::vector<StepRecord>* log = nullptr);

/// Checkpoint carrying model, optimizer moments and the train config.
checkpoint::Checkpoint to_checkpoint(const TrainState& state, const TrainConfig& cfg);
TrainState from_checkpoint(const checkpoint::Checkpoint& ckpt, TrainConfig* cfg = nullptr);

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace cyclemae::pretrain
