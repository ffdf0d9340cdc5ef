#pragma once

#include "cyclemae/common.hpp"
#include "cyclemae/video.hpp"

namespace cyclemae::tokenizer {

/// Spatio-temporal patch geometry and token width.
struct PatchConfig {
    int patch_h = 16;
    int patch_w = 16;
    int patch_t = 4;
    int embed_dim = 64;

    void validate() const;
    int patch_dim(int channels = 3) const { return channels * patch_t * patch_h * patch_w; }
    bool operator==(const PatchConfig&) const = default;
};

/// Raw pixel patches of one clip.
///
/// Token order is temporal-major then row-major spatial: row
/// `group * positions + i` holds temporal group `group` and spatial tile `i`
/// (tiles numbered left to right, top to bottom). Within a row, values are
/// laid out (channel, frame, y, x).
struct PatchGrid {
    int groups = 0;     // N_T
    int positions = 0;  // N_S
    int channels = 3;
    Mat patches;        // (groups * positions) x patch_dim

    int token_count() const { return groups * positions; }
    int patch_dim() const { return static_cast<int>(patches.cols()); }
    int row(int group, int position) const { return group * positions + position; }
};

/// Grid dimensions implied by a clip shape; throws naming the first axis that
/// is not divisible by the patch size.
struct GridShape {
    int groups;
    int rows;  // tiles along height
    int cols;  // tiles along width
    int positions() const { return rows * cols; }
};
GridShape grid_shape(int frames, int height, int width, const PatchConfig& cfg);

PatchGrid patchify(const video::VideoClip& clip, const PatchConfig& cfg);
video::VideoClip unpatchify(const PatchGrid& grid, const PatchConfig& cfg, int height, int width,
                            int frames);

/// Patch projection (patch_dim x D) and learned positional table (N x D).
struct EmbedParams {
    Mat projection;
    Mat positions;
};

/// Embedded tokens: tokens = patches * projection + positions.
struct TokenGrid {
    int groups = 0;
    int positions = 0;
    Mat tokens;  // N x D
    int token_count() const { return groups * positions; }
};

TokenGrid embed_tokens(const PatchGrid& grid, const EmbedParams& params);

}  // namespace cyclemae::tokenizer
