#pragma once

#include "cyclemae/common.hpp"
#include "cyclemae/tokenizer.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cyclemae::masking {

enum class MaskMode { random, uniform_frame, consistent };

std::string to_string(MaskMode mode);
MaskMode parse_mask_mode(const std::string& text);

/// Boolean mask over (temporal group, spatial position); true = masked.
struct MaskPlan {
    int groups = 0;
    int positions = 0;
    double ratio = 0.0;
    MaskMode mode = MaskMode::uniform_frame;
    std::vector<std::uint8_t> masked;  // groups x positions, row-major

    bool is_masked(int group, int position) const {
        return masked[static_cast<std::size_t>(group * positions + position)] != 0;
    }
    int row_masked_count(int group) const;
    int total_masked() const;
    bool rows_equal(int a, int b) const;
    /// Shape checks plus at least one visible position in every row.
    void validate() const;
};

/// floor(ratio * n) with a small tolerance so that e.g. 0.29 * 100 gives 29.
int masked_count(double ratio, int n);

MaskPlan sample_random_mask(int groups, int positions, double ratio, Rng& rng);
MaskPlan sample_uniform_frame_mask(int groups, int positions, double ratio, Rng& rng);
/// Copies the anchor row onto every partner row; the result is tagged consistent.
MaskPlan replicate_mask_rows(const MaskPlan& plan, int anchor, std::span<const int> partners);
/// All positions visible.
MaskPlan full_visibility(int groups, int positions);

/// Flat token indices of the visible positions, grouped by temporal group in
/// ascending (group, position) order.
struct VisibleIndex {
    int groups = 0;
    int positions = 0;
    std::vector<int> rows;           // flat token index group * positions + i
    std::vector<int> group_offsets;  // groups + 1 entries into `rows`

    int visible_in_group(int g) const {
        return group_offsets[static_cast<std::size_t>(g) + 1] -
               group_offsets[static_cast<std::size_t>(g)];
    }
    int count() const { return static_cast<int>(rows.size()); }
};

VisibleIndex visible_index(const MaskPlan& plan);

struct VisibleTokens {
    Mat tokens;  // one row per visible position, in index order
    VisibleIndex index;
};

VisibleTokens apply_mask(const tokenizer::TokenGrid& grid, const MaskPlan& plan);

/// Inverse of apply_mask: N x D matrix with visible rows restored and every
/// masked row set to `sentinel`.
Mat scatter_visible(const VisibleTokens& visible, double sentinel);

}  // namespace cyclemae::masking
