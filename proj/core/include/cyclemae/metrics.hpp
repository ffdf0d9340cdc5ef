#pragma once

#include "cyclemae/video.hpp"

#include <cstdint>
#include <optional>
#include <span>

namespace cyclemae::metrics {

struct Overlap {
    double dice = 0.0;
    double iou = 0.0;
};

/// Dice and IoU of class `cls` over the whole label volume. Both masks empty
/// counts as perfect agreement (1, 1).
Overlap overlap_metrics(const video::LabelMap& pred, const video::LabelMap& truth, int cls);

struct Spacing {
    double y = 1.0;
    double x = 1.0;
};

struct Surface {
    double hd95 = 0.0;
    double assd = 0.0;
};

/// Boundary pixels of class `cls` in one H x W frame: members with at least
/// one 4-neighbour outside the class (the image border counts as outside).
/// Returned as flat indices y * W + x in raster order.
std::vector<int> boundary_pixels(std::span<const std::uint8_t> frame, int height, int width,
                                 int cls);

/// 2D surface distances of one frame. hd95 is the linearly interpolated 95th
/// percentile of the pooled directed boundary-to-boundary distances of both
/// sides; assd is the mean of the two directed mean distances. Empty when
/// either side has no boundary.
std::optional<Surface> surface_metrics_2d(std::span<const std::uint8_t> pred,
                                          std::span<const std::uint8_t> truth, int height,
                                          int width, int cls, Spacing spacing = {});

/// Per-frame 2D metrics averaged over the frames where both are defined.
/// Empty when no frame is defined.
std::optional<Surface> surface_metrics(const video::LabelMap& pred, const video::LabelMap& truth,
                                       int cls, Spacing spacing = {});

/// Area under the ROC curve as the Mann-Whitney statistic with midranks for
/// ties. Labels are 0/1; throws unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct ClassificationMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    /// Some precision/recall/F1 term had a zero denominator and was set to 0.
    bool zero_division = false;
};

/// Binary metrics (positive class 1) when at most two classes occur,
/// macro averages otherwise. `classes` = 0 infers the count from the data.
ClassificationMetrics classification_metrics(std::span<const int> pred,
                                             std::span<const int> labels, int classes = 0);

}  // namespace cyclemae::metrics
