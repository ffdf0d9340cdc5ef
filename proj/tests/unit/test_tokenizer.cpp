#include "doctest.h"

#include "cyclemae/tokenizer.hpp"

using namespace cyclemae;
using namespace cyclemae::tokenizer;

namespace {

video::VideoClip ramp_clip(int frames, int height, int width) {
    video::VideoClip clip = video::VideoClip::zeros(frames, height, width);
    for (std::size_t i = 0; i < clip.data.size(); ++i) {
        clip.data[i] = static_cast<float>(i % 1009) / 1009.0F;
    }
    return clip;
}

}  // namespace

TEST_CASE("grid shape names the indivisible axis") {
    const PatchConfig cfg{16, 16, 4, 8};
    const GridShape g = grid_shape(32, 64, 48, cfg);
    CHECK(g.groups == 8);
    CHECK(g.rows == 4);
    CHECK(g.cols == 3);
    CHECK_THROWS_WITH_AS(grid_shape(30, 64, 64, cfg), doctest::Contains("frames"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(grid_shape(32, 60, 64, cfg), doctest::Contains("height"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(grid_shape(32, 64, 50, cfg), doctest::Contains("width"),
                         std::invalid_argument);
}

TEST_CASE("patch rows follow (group, tile) order with (c, t, y, x) layout") {
    const PatchConfig cfg{4, 2, 2, 8};
    const video::VideoClip clip = ramp_clip(4, 8, 6);
    const PatchGrid grid = patchify(clip, cfg);
    CHECK(grid.groups == 2);
    CHECK(grid.positions == 2 * 3);
    CHECK(grid.patch_dim() == 3 * 2 * 4 * 2);
    for (int g = 0; g < grid.groups; ++g) {
        for (int i = 0; i < grid.positions; ++i) {
            const int ty = i / 3;
            const int tx = i % 3;
            int col = 0;
            for (int c = 0; c < 3; ++c) {
                for (int dt = 0; dt < 2; ++dt) {
                    for (int dy = 0; dy < 4; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            const double want = clip.at(g * 2 + dt, ty * 4 + dy, tx * 2 + dx, c);
                            REQUIRE(grid.patches(grid.row(g, i), col++) == want);
                        }
                    }
                }
            }
        }
    }
}

TEST_CASE("unpatchify inverts patchify bitwise") {
    const PatchConfig cfg{8, 8, 2, 8};
    const video::VideoClip clip = ramp_clip(6, 16, 24);
    const video::VideoClip back = unpatchify(patchify(clip, cfg), cfg, 16, 24, 6);
    CHECK(back.data == clip.data);
}

TEST_CASE("embed_tokens is a projection plus positions") {
    const PatchConfig cfg{4, 4, 2, 5};
    const PatchGrid grid = patchify(ramp_clip(4, 8, 8), cfg);
    EmbedParams p;
    Rng rng(1);
    p.projection = Mat(grid.patch_dim(), 5);
    p.positions = Mat(grid.token_count(), 5);
    for (Eigen::Index i = 0; i < p.projection.size(); ++i) p.projection.data()[i] = standard_normal(rng);
    for (Eigen::Index i = 0; i < p.positions.size(); ++i) p.positions.data()[i] = standard_normal(rng);
    const TokenGrid tokens = embed_tokens(grid, p);
    REQUIRE(tokens.tokens.rows() == grid.token_count());
    for (int r = 0; r < grid.token_count(); ++r) {
        for (int d = 0; d < 5; ++d) {
            double want = p.positions(r, d);
            for (int k = 0; k < grid.patch_dim(); ++k) {
                want += grid.patches(r, k) * p.projection(k, d);
            }
            CHECK(tokens.tokens(r, d) == doctest::Approx(want).epsilon(1e-12));
        }
    }
    p.positions = Mat::Zero(3, 5);
    CHECK_THROWS_AS(embed_tokens(grid, p), std::invalid_argument);
}
