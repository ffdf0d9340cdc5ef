#include "cyclemae/adapt_eval.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cyclemae::adapt {

std::string to_string(AugmentMode mode) {
    return mode == AugmentMode::classification ? "classification" : "segmentation";
}

AugmentMode parse_augment_mode(const std::string& text) {
    if (text == "segmentation") return AugmentMode::segmentation;
    if (text == "classification") return AugmentMode::classification;
    throw std::invalid_argument("unknown augment mode '" + text + "'");
}

void AugmentConfig::validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!(rotate_deg >= 0.0 && rotate_deg <= 180.0)) {
        throw std::invalid_argument("augment.rotate_deg must lie in [0, 180]");
    }
    if (!(translate_frac >= 0.0 && translate_frac < 1.0)) {
        throw std::invalid_argument("augment.translate_frac must lie in [0, 1)");
    }
    if (!(scale_min > 0.0 && scale_min <= scale_max)) {
        throw std::invalid_argument("augment.scale_min must be > 0 and <= scale_max");
    }
    if (erase_patch < 0) {
        throw std::invalid_argument("augment.erase_patch must be >= 0");
    }
    if (!prob(erase_prob) || !prob(flip_prob)) {
        throw std::invalid_argument("augment probabilities must lie in [0, 1]");
    }
}

AugmentConfig AugmentConfig::disabled() {
    AugmentConfig c;
    c.rotate_deg = 0.0;
    c.translate_frac = 0.0;
    c.scale_min = 1.0;
    c.scale_max = 1.0;
    c.erase_patch = 0;
    c.erase_prob = 0.0;
    c.hflip = false;
    c.vflip = false;
    c.flip_prob = 0.0;
    return c;
}

namespace {

double uniform_in(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform_unit(rng); }

bool coin(Rng& rng, double p) { return p > 0.0 && uniform_unit(rng) < p; }

}  // namespace

AugmentDraw sample_augment(const AugmentConfig& cfg, int height, int width, Rng& rng) {
    cfg.validate();
    AugmentDraw d;
    if (cfg.mode == AugmentMode::segmentation) {
        if (cfg.rotate_deg > 0.0) {
            d.angle_deg = uniform_in(rng, -cfg.rotate_deg, cfg.rotate_deg);
        }
        if (cfg.translate_frac > 0.0) {
            d.shift_y = uniform_in(rng, -cfg.translate_frac, cfg.translate_frac) * height;
            d.shift_x = uniform_in(rng, -cfg.translate_frac, cfg.translate_frac) * width;
        }
        if (cfg.scale_max > cfg.scale_min) {
            d.scale = uniform_in(rng, cfg.scale_min, cfg.scale_max);
        } else {
            d.scale = cfg.scale_min;
        }
    }
    d.hflip = cfg.hflip && coin(rng, cfg.flip_prob);
    d.vflip = cfg.vflip && coin(rng, cfg.flip_prob);
    if (cfg.mode == AugmentMode::segmentation && cfg.erase_patch > 0 &&
        coin(rng, cfg.erase_prob)) {
        if (cfg.erase_patch > height || cfg.erase_patch > width) {
            throw std::invalid_argument("augment.erase_patch exceeds the frame size");
        }
        const auto y = static_cast<int>(
            uniform_index(rng, static_cast<std::size_t>(height - cfg.erase_patch + 1)));
        const auto x = static_cast<int>(
            uniform_index(rng, static_cast<std::size_t>(width - cfg.erase_patch + 1)));
        d.erase_origin = std::make_pair(y, x);
        d.erase_size = cfg.erase_patch;
    }
    return d;
}

std::pair<double, double> inverse_map(const AugmentDraw& d, int height, int width, double y,
                                      double x) {
    const double cy = 0.5 * (height - 1);
    const double cx = 0.5 * (width - 1);
    const double theta = d.angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double u = x - cx - d.shift_x;
    const double v = y - cy - d.shift_y;
    return {(-s * u + c * v) / d.scale + cy, (c * u + s * v) / d.scale + cx};
}

namespace {

video::VideoClip warp_clip(const video::VideoClip& in, const AugmentDraw& d) {
    video::VideoClip out = in;
    const int H = in.height;
    const int W = in.width;
    auto sample = [&](int t, int y, int x, int c) -> double {
        if (y < 0 || y >= H || x < 0 || x >= W) {
            return 0.0;
        }
        return in.at(t, y, x, c);
    };
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const auto [sy, sx] = inverse_map(d, H, W, y, x);
            const double fy = std::floor(sy);
            const double fx = std::floor(sx);
            const double wy = sy - fy;
            const double wx = sx - fx;
            const int y0 = static_cast<int>(fy);
            const int x0 = static_cast<int>(fx);
            for (int t = 0; t < in.frames; ++t) {
                for (int c = 0; c < in.channels; ++c) {
                    const double v = (1 - wy) * ((1 - wx) * sample(t, y0, x0, c) +
                                                 wx * sample(t, y0, x0 + 1, c)) +
                                     wy * ((1 - wx) * sample(t, y0 + 1, x0, c) +
                                           wx * sample(t, y0 + 1, x0 + 1, c));
                    out.at(t, y, x, c) = static_cast<float>(v);
                }
            }
        }
    }
    return out;
}

video::LabelMap warp_mask(const video::LabelMap& in, const AugmentDraw& d) {
    video::LabelMap out = in;
    const int H = in.height;
    const int W = in.width;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const auto [sy, sx] = inverse_map(d, H, W, y, x);
            const auto ny = static_cast<int>(std::floor(sy + 0.5));
            const auto nx = static_cast<int>(std::floor(sx + 0.5));
            const bool inside = ny >= 0 && ny < H && nx >= 0 && nx < W;
            for (int t = 0; t < in.frames; ++t) {
                out.at(t, y, x) = inside ? in.at(t, ny, nx) : std::uint8_t{0};
            }
        }
    }
    return out;
}

template <typename Get, typename Set>
void flip(int frames, int height, int width, bool h, bool v, Get get, Set set) {
    if (!h && !v) {
        return;
    }
    for (int t = 0; t < frames; ++t) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const int sy = v ? height - 1 - y : y;
                const int sx = h ? width - 1 - x : x;
                if (sy * width + sx > y * width + x) {
                    const auto a = get(t, y, x);
                    set(t, y, x, get(t, sy, sx));
                    set(t, sy, sx, a);
                }
            }
        }
    }
}

}  // namespace

LabeledClip apply_augment(const LabeledClip& sample, const AugmentDraw& d) {
    LabeledClip out;
    out.label = sample.label;
    const video::VideoClip& clip = sample.clip;
    if (sample.mask && (sample.mask->frames != clip.frames || sample.mask->height != clip.height ||
                        sample.mask->width != clip.width)) {
        throw std::invalid_argument("augment: mask shape does not match the clip");
    }
    if (d.geometric_identity()) {
        out.clip = clip;
        out.mask = sample.mask;
    } else {
        out.clip = warp_clip(clip, d);
        if (sample.mask) {
            out.mask = warp_mask(*sample.mask, d);
        }
    }

    video::VideoClip& c = out.clip;
    for (int ch = 0; ch < c.channels; ++ch) {
        flip(
            c.frames, c.height, c.width, d.hflip, d.vflip,
            [&](int t, int y, int x) { return c.at(t, y, x, ch); },
            [&](int t, int y, int x, float v) { c.at(t, y, x, ch) = v; });
    }
    if (out.mask) {
        video::LabelMap& m = *out.mask;
        flip(
            m.frames, m.height, m.width, d.hflip, d.vflip,
            [&](int t, int y, int x) { return m.at(t, y, x); },
            [&](int t, int y, int x, std::uint8_t v) { m.at(t, y, x) = v; });
    }

    if (d.erase_origin) {
        const auto [oy, ox] = *d.erase_origin;
        for (int t = 0; t < c.frames; ++t) {
            for (int y = oy; y < oy + d.erase_size && y < c.height; ++y) {
                for (int x = ox; x < ox + d.erase_size && x < c.width; ++x) {
                    for (int ch = 0; ch < c.channels; ++ch) {
                        c.at(t, y, x, ch) = 0.0F;
                    }
                }
            }
        }
    }
    return out;
}

LabeledClip augment(const LabeledClip& sample, const AugmentConfig& cfg, Rng& rng) {
    const AugmentDraw d = sample_augment(cfg, sample.clip.height, sample.clip.width, rng);
    return apply_augment(sample, d);
}

}  // namespace cyclemae::adapt
