#include "cyclemae/tokenizer.hpp"

#include <stdexcept>
#include <string>

namespace cyclemae::tokenizer {

void PatchConfig::validate() const {
    if (patch_h < 1 || patch_w < 1 || patch_t < 1) {
        throw std::invalid_argument("PatchConfig: patch sides must be positive");
    }
    if (embed_dim < 1) {
        throw std::invalid_argument("PatchConfig: embed_dim must be >= 1");
    }
}

GridShape grid_shape(int frames, int height, int width, const PatchConfig& cfg) {
    cfg.validate();
    auto check = [](int size, int patch, const char* axis) {
        if (size < patch || size % patch != 0) {
            throw std::invalid_argument(std::string("patchify: ") + axis + " " +
                                        std::to_string(size) + " is not divisible by patch size " +
                                        std::to_string(patch));
        }
    };
    check(frames, cfg.patch_t, "frames");
    check(height, cfg.patch_h, "height");
    check(width, cfg.patch_w, "width");
    return GridShape{frames / cfg.patch_t, height / cfg.patch_h, width / cfg.patch_w};
}

PatchGrid patchify(const video::VideoClip& clip, const PatchConfig& cfg) {
    const GridShape shape = grid_shape(clip.frames, clip.height, clip.width, cfg);
    PatchGrid grid;
    grid.groups = shape.groups;
    grid.positions = shape.positions();
    grid.channels = clip.channels;
    grid.patches.resize(grid.token_count(), cfg.patch_dim(clip.channels));

    for (int g = 0; g < shape.groups; ++g) {
        for (int ty = 0; ty < shape.rows; ++ty) {
            for (int tx = 0; tx < shape.cols; ++tx) {
                auto row = grid.patches.row(grid.row(g, ty * shape.cols + tx));
                Eigen::Index k = 0;
                for (int c = 0; c < clip.channels; ++c) {
                    for (int dt = 0; dt < cfg.patch_t; ++dt) {
                        for (int dy = 0; dy < cfg.patch_h; ++dy) {
                            for (int dx = 0; dx < cfg.patch_w; ++dx) {
                                row(k++) = clip.at(g * cfg.patch_t + dt, ty * cfg.patch_h + dy,
                                                   tx * cfg.patch_w + dx, c);
                            }
                        }
                    }
                }
            }
        }
    }
    return grid;
}

video::VideoClip unpatchify(const PatchGrid& grid, const PatchConfig& cfg, int height, int width,
                            int frames) {
    const GridShape shape = grid_shape(frames, height, width, cfg);
    if (shape.groups != grid.groups || shape.positions() != grid.positions ||
        grid.patches.rows() != grid.token_count() ||
        grid.patch_dim() != cfg.patch_dim(grid.channels)) {
        throw std::invalid_argument("unpatchify: grid dimensions do not match clip shape");
    }
    video::VideoClip clip = video::VideoClip::zeros(frames, height, width, grid.channels);
    for (int g = 0; g < shape.groups; ++g) {
        for (int ty = 0; ty < shape.rows; ++ty) {
            for (int tx = 0; tx < shape.cols; ++tx) {
                const auto row = grid.patches.row(grid.row(g, ty * shape.cols + tx));
                Eigen::Index k = 0;
                for (int c = 0; c < grid.channels; ++c) {
                    for (int dt = 0; dt < cfg.patch_t; ++dt) {
                        for (int dy = 0; dy < cfg.patch_h; ++dy) {
                            for (int dx = 0; dx < cfg.patch_w; ++dx) {
                                clip.at(g * cfg.patch_t + dt, ty * cfg.patch_h + dy,
                                        tx * cfg.patch_w + dx, c) = static_cast<float>(row(k++));
                            }
                        }
                    }
                }
            }
        }
    }
    return clip;
}

TokenGrid embed_tokens(const PatchGrid& grid, const EmbedParams& params) {
    if (params.projection.rows() != grid.patch_dim()) {
        throw std::invalid_argument("embed_tokens: projection has " +
                                    std::to_string(params.projection.rows()) +
                                    " rows, patch dim is " + std::to_string(grid.patch_dim()));
    }
    if (params.positions.rows() != grid.token_count() ||
        params.positions.cols() != params.projection.cols()) {
        throw std::invalid_argument("embed_tokens: positional table must be N x D");
    }
    TokenGrid out;
    out.groups = grid.groups;
    out.positions = grid.positions;
    out.tokens = grid.patches * params.projection + params.positions;
    return out;
}

}  // namespace cyclemae::tokenizer
