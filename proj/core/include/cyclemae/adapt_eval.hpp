#pragma once

#include "cyclemae/backbone.hpp"
#include "cyclemae/checkpoint.hpp"
#include "cyclemae/metrics.hpp"
#include "cyclemae/video.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cyclemae::adapt {

/// A clip with a class label, a per-pixel label map, or both.
struct LabeledClip {
    video::VideoClip clip;
    std::optional<int> label;
    std::optional<video::LabelMap> mask;
};

// ---------------------------------------------------------------------------
// Augmentation

enum class AugmentMode { segmentation, classification };

std::string to_string(AugmentMode mode);
AugmentMode parse_augment_mode(const std::string& text);

struct AugmentConfig {
    double rotate_deg = 15.0;      // angle drawn from [-rotate_deg, rotate_deg]
    double translate_frac = 0.10;  // shift drawn from [-frac, frac] of each side
    double scale_min = 0.9;
    double scale_max = 1.4;
    int erase_patch = 16;  // side of the erased square; 0 disables erasing
    double erase_prob = 0.5;
    bool hflip = true;
    bool vflip = true;
    double flip_prob = 0.5;
    AugmentMode mode = AugmentMode::segmentation;

    void validate() const;
    /// Every transform switched off.
    static AugmentConfig disabled();
};

/// One concrete draw of the random transform.
struct AugmentDraw {
    double angle_deg = 0.0;
    double shift_y = 0.0;  // pixels
    double shift_x = 0.0;
    double scale = 1.0;
    bool hflip = false;
    bool vflip = false;
    std::optional<std::pair<int, int>> erase_origin;  // (y, x) of the erased square
    int erase_size = 0;

    bool geometric_identity() const {
        return angle_deg == 0.0 && shift_y == 0.0 && shift_x == 0.0 && scale == 1.0;
    }
};

AugmentDraw sample_augment(const AugmentConfig& cfg, int height, int width, Rng& rng);

/// Source coordinate (y, x) read by output pixel (y, x) under the
/// rotate/scale/translate part of `draw` (flips excluded).
std::pair<double, double> inverse_map(const AugmentDraw& draw, int height, int width, double y,
                                      double x);

/// Applies a draw: affine warp (bilinear for pixels, nearest for labels,
/// zero outside), then flips, then erasing of the image only.
LabeledClip apply_augment(const LabeledClip& sample, const AugmentDraw& draw);

LabeledClip augment(const LabeledClip& sample, const AugmentConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------
// Task heads

enum class Task { classification, segmentation };

std::string to_string(Task task);
Task parse_task(const std::string& text);

/// Linear task head. Classification: D -> classes on standardised pooled
/// features. Segmentation: D -> classes * patch_t * patch_h * patch_w per
/// token, class-major (column k * cells + cell).
struct TaskHead {
    Task task = Task::classification;
    int classes = 2;
    Mat weight;
    RowVec bias;
    RowVec feature_mean;   // classification only
    RowVec feature_scale;  // classification only

    void validate(const backbone::ModelConfig& cfg) const;
};

TaskHead zero_head(Task task, int classes, const backbone::ModelConfig& cfg);

/// Mean over every encoder output (patch latents and [CLS]) of the unmasked clip.
RowVec pooled_features(const backbone::Model& model, const video::VideoClip& clip);

/// Class scores for one clip (1 x classes).
RowVec classify(const backbone::Model& model, const video::VideoClip& clip, const TaskHead& head);

/// Per-pixel class scores, laid out [t][y][x][class].
struct ScoreVolume {
    int frames = 0;
    int height = 0;
    int width = 0;
    int classes = 0;
    std::vector<double> data;

    double at(int t, int y, int x, int k) const {
        return data[((static_cast<std::size_t>(t) * static_cast<std::size_t>(height) +
                      static_cast<std::size_t>(y)) *
                         static_cast<std::size_t>(width) +
                     static_cast<std::size_t>(x)) *
                        static_cast<std::size_t>(classes) +
                    static_cast<std::size_t>(k)];
    }
    /// Highest-scoring class per pixel; ties go to the lowest class index.
    video::LabelMap argmax() const;
};

ScoreVolume decode_segmentation(const backbone::Model& model, const video::VideoClip& clip,
                                const TaskHead& head);

// ---------------------------------------------------------------------------
// Fine-tuning and reporting

struct FinetuneConfig {
    Task task = Task::classification;
    int classes = 2;  // segmentation: regions + background
    double label_fraction = 1.0;
    bool freeze_encoder = true;
    int epochs = 100;
    int batch_size = 8;
    double learning_rate = 1e-2;
    double encoder_learning_rate = 1e-4;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
    bool augment_enabled = false;
    AugmentConfig augment;

    void validate() const;
};

/// Stratified (by class label when present) subsample of `indices`, keeping
/// round(fraction * n_c) items per stratum (at least one) and the original
/// order. fraction 1 returns the input unchanged.
std::vector<std::size_t> label_subsample(const std::vector<LabeledClip>& samples,
                                         const std::vector<std::size_t>& indices,
                                         double fraction, std::uint64_t seed);

struct ClassMetrics {
    int cls = 0;
    double dice = 0.0;
    double iou = 0.0;
    std::optional<double> hd95;
    std::optional<double> assd;
    int surface_missing = 0;  // samples with no defined surface distance
};

struct MetricReport {
    Task task = Task::classification;
    std::string split = "test";
    double label_fraction = 1.0;
    int samples = 0;
    std::vector<std::pair<std::string, double>> values;  // report order
    std::vector<ClassMetrics> per_class;                 // segmentation only
    std::vector<std::string> warnings;

    std::optional<double> value(const std::string& name) const;
};

std::string to_json(const MetricReport& report);
/// Flat table: one header row and one value row per class (segmentation) or
/// a single row (classification).
std::string to_tsv(const MetricReport& report);

MetricReport evaluate(const backbone::Model& model, const TaskHead& head,
                      const std::vector<LabeledClip>& samples, const std::string& split,
                      double label_fraction);

struct FinetuneResult {
    backbone::Model model;
    TaskHead head;
    MetricReport report;
    std::vector<double> epoch_loss;
    std::size_t train_count = 0;
};

/// Trains the head (and the encoder when not frozen) on `train`, then reports
/// metrics on `test`.
FinetuneResult finetune(const backbone::Model& pretrained, const std::vector<LabeledClip>& train,
                        const std::vector<LabeledClip>& test, const FinetuneConfig& cfg);

/// Checkpoint holding the (possibly updated) model, the head tensors and the
/// fine-tuning settings needed to recompute the report.
checkpoint::Checkpoint to_checkpoint(const FinetuneResult& result, const FinetuneConfig& cfg);
TaskHead head_from_checkpoint(const checkpoint::Checkpoint& ckpt);

/// Converts manifest samples, dropping the split.
std::vector<LabeledClip> to_labeled(const std::vector<video::StoredSample>& samples,
                                    video::Split split);

}  // namespace cyclemae::adapt
