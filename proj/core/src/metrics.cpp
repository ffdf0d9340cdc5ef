#include "cyclemae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace cyclemae::metrics {

namespace {

void check_same_shape(const video::LabelMap& a, const video::LabelMap& b) {
    if (a.frames != b.frames || a.height != b.height || a.width != b.width ||
        a.data.size() != b.data.size()) {
        throw std::invalid_argument("label maps differ in shape");
    }
}

}  // namespace

Overlap overlap_metrics(const video::LabelMap& pred, const video::LabelMap& truth, int cls) {
    check_same_shape(pred, truth);
    const auto c = static_cast<std::uint8_t>(cls);
    std::size_t p = 0;
    std::size_t g = 0;
    std::size_t both = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool in_p = pred.data[i] == c;
        const bool in_g = truth.data[i] == c;
        p += in_p;
        g += in_g;
        both += in_p && in_g;
    }
    if (p + g == 0) {
        return {1.0, 1.0};
    }
    return {2.0 * static_cast<double>(both) / static_cast<double>(p + g),
            static_cast<double>(both) / static_cast<double>(p + g - both)};
}

std::vector<int> boundary_pixels(std::span<const std::uint8_t> frame, int height, int width,
                                 int cls) {
    const auto c = static_cast<std::uint8_t>(cls);
    auto inside = [&](int y, int x) {
        return y >= 0 && y < height && x >= 0 && x < width &&
               frame[static_cast<std::size_t>(y * width + x)] == c;
    };
    std::vector<int> out;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (inside(y, x) && (!inside(y - 1, x) || !inside(y + 1, x) || !inside(y, x - 1) ||
                                 !inside(y, x + 1))) {
                out.push_back(y * width + x);
            }
        }
    }
    return out;
}

namespace {

/// Distance from every point of `from` to the nearest point of `to`.
std::vector<double> directed(const std::vector<int>& from, const std::vector<int>& to, int width,
                             Spacing s) {
    std::vector<double> out;
    out.reserve(from.size());
    for (const int a : from) {
        const double ay = (a / width) * s.y;
        const double ax = (a % width) * s.x;
        double best = std::numeric_limits<double>::infinity();
        for (const int b : to) {
            const double dy = ay - (b / width) * s.y;
            const double dx = ax - (b % width) * s.x;
            best = std::min(best, dy * dy + dx * dx);
        }
        out.push_back(std::sqrt(best));
    }
    return out;
}

double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Linear interpolation between order statistics at rank q * (n - 1).
double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double rank = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (rank - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

std::optional<Surface> surface_metrics_2d(std::span<const std::uint8_t> pred,
                                          std::span<const std::uint8_t> truth, int height,
                                          int width, int cls, Spacing spacing) {
    const auto n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    if (pred.size() != n || truth.size() != n) {
        throw std::invalid_argument("surface_metrics_2d: frame size mismatch");
    }
    const std::vector<int> bp = boundary_pixels(pred, height, width, cls);
    const std::vector<int> bg = boundary_pixels(truth, height, width, cls);
    if (bp.empty() || bg.empty()) {
        return std::nullopt;
    }
    const std::vector<double> d_pg = directed(bp, bg, width, spacing);
    const std::vector<double> d_gp = directed(bg, bp, width, spacing);
    std::vector<double> pooled = d_pg;
    pooled.insert(pooled.end(), d_gp.begin(), d_gp.end());
    return Surface{percentile(std::move(pooled), 0.95), 0.5 * (mean(d_pg) + mean(d_gp))};
}

std::optional<Surface> surface_metrics(const video::LabelMap& pred, const video::LabelMap& truth,
                                       int cls, Spacing spacing) {
    check_same_shape(pred, truth);
    const auto frame = static_cast<std::size_t>(pred.height) * static_cast<std::size_t>(pred.width);
    Surface sum;
    int defined = 0;
    for (int t = 0; t < pred.frames; ++t) {
        const std::span<const std::uint8_t> p(pred.data.data() + t * frame, frame);
        const std::span<const std::uint8_t> g(truth.data.data() + t * frame, frame);
        if (const auto s = surface_metrics_2d(p, g, pred.height, pred.width, cls, spacing)) {
            sum.hd95 += s->hd95;
            sum.assd += s->assd;
            ++defined;
        }
    }
    if (defined == 0) {
        return std::nullopt;
    }
    return Surface{sum.hd95 / defined, sum.assd / defined};
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw std::invalid_argument("roc_auc: scores and labels differ in length");
    }
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) {
            ++j;
        }
        const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            rank[order[k]] = mid;
        }
        i = j + 1;
    }
    double pos = 0.0;
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw std::invalid_argument("roc_auc: labels must be 0 or 1");
        }
        if (labels[i] == 1) {
            pos += 1.0;
            rank_sum += rank[i];
        }
    }
    const double neg = static_cast<double>(n) - pos;
    if (pos == 0.0 || neg == 0.0) {
        throw std::invalid_argument("roc_auc: both classes must be present");
    }
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

ClassificationMetrics classification_metrics(std::span<const int> pred,
                                             std::span<const int> labels, int classes) {
    if (pred.empty()) {
        throw std::invalid_argument("classification_metrics: empty input");
    }
    if (pred.size() != labels.size()) {
        throw std::invalid_argument("classification_metrics: length mismatch");
    }
    int k = classes;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || labels[i] < 0) {
            throw std::invalid_argument("classification_metrics: negative class index");
        }
        if (classes == 0) {
            k = std::max({k, pred[i] + 1, labels[i] + 1});
        } else if (pred[i] >= classes || labels[i] >= classes) {
            throw std::invalid_argument("classification_metrics: class index out of range");
        }
    }
    k = std::max(k, 2);

    ClassificationMetrics m;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        correct += pred[i] == labels[i];
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());

    auto ratio = [&](double num, double den) {
        if (den == 0.0) {
            m.zero_division = true;
            return 0.0;
        }
        return num / den;
    };
    auto one_class = [&](int c, double& p, double& r, double& f) {
        double tp = 0.0, fp = 0.0, fn = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            tp += pred[i] == c && labels[i] == c;
            fp += pred[i] == c && labels[i] != c;
            fn += pred[i] != c && labels[i] == c;
        }
        p = ratio(tp, tp + fp);
        r = ratio(tp, tp + fn);
        f = ratio(2.0 * tp, 2.0 * tp + fp + fn);
    };
    if (k == 2) {
        one_class(1, m.precision, m.recall, m.f1);
    } else {
        for (int c = 0; c < k; ++c) {
            double p = 0.0, r = 0.0, f = 0.0;
            one_class(c, p, r, f);
            m.precision += p / k;
            m.recall += r / k;
            m.f1 += f / k;
        }
    }
    return m;
}

}  // namespace cyclemae::metrics
