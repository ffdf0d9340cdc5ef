#include "cyclemae/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cyclemae::masking {

std::string to_string(MaskMode mode) {
    switch (mode) {
        case MaskMode::random:
            return "random";
        case MaskMode::uniform_frame:
            return "uniform_frame";
        case MaskMode::consistent:
            return "consistent";
    }
    return "uniform_frame";
}

MaskMode parse_mask_mode(const std::string& text) {
    if (text == "random") return MaskMode::random;
    if (text == "uniform_frame") return MaskMode::uniform_frame;
    if (text == "consistent") return MaskMode::consistent;
    throw std::invalid_argument("unknown mask mode '" + text + "'");
}

int MaskPlan::row_masked_count(int group) const {
    const auto begin = masked.begin() + static_cast<std::ptrdiff_t>(group * positions);
    return static_cast<int>(std::count(begin, begin + positions, std::uint8_t{1}));
}

int MaskPlan::total_masked() const {
    return static_cast<int>(std::count(masked.begin(), masked.end(), std::uint8_t{1}));
}

bool MaskPlan::rows_equal(int a, int b) const {
    return std::equal(masked.begin() + static_cast<std::ptrdiff_t>(a * positions),
                      masked.begin() + static_cast<std::ptrdiff_t>((a + 1) * positions),
                      masked.begin() + static_cast<std::ptrdiff_t>(b * positions));
}

void MaskPlan::validate() const {
    if (groups < 1 || positions < 1 ||
        masked.size() != static_cast<std::size_t>(groups) * static_cast<std::size_t>(positions)) {
        throw std::invalid_argument("MaskPlan: matrix shape does not match groups x positions");
    }
    for (int g = 0; g < groups; ++g) {
        if (row_masked_count(g) >= positions) {
            throw std::invalid_argument("MaskPlan: temporal group " + std::to_string(g) +
                                        " has no visible position");
        }
    }
}

int masked_count(double ratio, int n) {
    if (!(ratio >= 0.0 && ratio < 1.0)) {
        throw std::invalid_argument("mask ratio must lie in [0, 1), got " + std::to_string(ratio));
    }
    return static_cast<int>(std::floor(ratio * n + 1e-9));
}

namespace {

void check_dims(int groups, int positions) {
    if (groups < 1 || positions < 1) {
        throw std::invalid_argument("mask dimensions must be positive");
    }
}

/// Marks a uniformly random k-subset of [0, n) starting at `out`.
void mark_subset(std::uint8_t* out, int n, int k, Rng& rng, std::vector<int>& scratch) {
    scratch.resize(static_cast<std::size_t>(n));
    std::iota(scratch.begin(), scratch.end(), 0);
    for (int i = 0; i < k; ++i) {
        const auto j = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n - i))) + i;
        std::swap(scratch[static_cast<std::size_t>(i)], scratch[static_cast<std::size_t>(j)]);
        out[scratch[static_cast<std::size_t>(i)]] = 1;
    }
}

}  // namespace

MaskPlan sample_random_mask(int groups, int positions, double ratio, Rng& rng) {
    check_dims(groups, positions);
    const int n = groups * positions;
    const int k = masked_count(ratio, n);
    if (k > n - groups) {
        throw std::invalid_argument("random mask: ratio leaves fewer visible tokens than groups");
    }
    MaskPlan plan{groups, positions, ratio, MaskMode::random, {}};
    std::vector<int> scratch;
    // Rejection keeps the draw uniform over subsets that leave every group a
    // visible token.
    for (int attempt = 0; attempt < 10000; ++attempt) {
        plan.masked.assign(static_cast<std::size_t>(n), 0);
        mark_subset(plan.masked.data(), n, k, rng, scratch);
        bool ok = true;
        for (int g = 0; g < groups && ok; ++g) {
            ok = plan.row_masked_count(g) < positions;
        }
        if (ok) {
            return plan;
        }
    }
    throw std::runtime_error("random mask: could not leave a visible token in every group");
}

MaskPlan sample_uniform_frame_mask(int groups, int positions, double ratio, Rng& rng) {
    check_dims(groups, positions);
    const int k = masked_count(ratio, positions);
    if (k >= positions) {
        throw std::invalid_argument("uniform-frame mask: ratio leaves no visible position per row");
    }
    MaskPlan plan{groups, positions, ratio, MaskMode::uniform_frame, {}};
    plan.masked.assign(static_cast<std::size_t>(groups * positions), 0);
    std::vector<int> scratch;
    for (int g = 0; g < groups; ++g) {
        mark_subset(plan.masked.data() + static_cast<std::ptrdiff_t>(g * positions), positions, k,
                    rng, scratch);
    }
    return plan;
}

MaskPlan replicate_mask_rows(const MaskPlan& plan, int anchor, std::span<const int> partners) {
    if (plan.mode != MaskMode::uniform_frame) {
        throw std::invalid_argument("replicate_mask_rows: source plan must be uniform_frame");
    }
    auto check_row = [&](int r) {
        if (r < 0 || r >= plan.groups) {
            throw std::out_of_range("replicate_mask_rows: row " + std::to_string(r) +
                                    " out of range");
        }
    };
    check_row(anchor);
    MaskPlan out = plan;
    out.mode = MaskMode::consistent;
    const auto src = plan.masked.begin() + static_cast<std::ptrdiff_t>(anchor * plan.positions);
    for (const int p : partners) {
        check_row(p);
        if (p == anchor) {
            throw std::invalid_argument("replicate_mask_rows: anchor listed among partners");
        }
        std::copy(src, src + plan.positions,
                  out.masked.begin() + static_cast<std::ptrdiff_t>(p * plan.positions));
    }
    return out;
}

MaskPlan full_visibility(int groups, int positions) {
    check_dims(groups, positions);
    MaskPlan plan{groups, positions, 0.0, MaskMode::uniform_frame, {}};
    plan.masked.assign(static_cast<std::size_t>(groups * positions), 0);
    return plan;
}

VisibleIndex visible_index(const MaskPlan& plan) {
    VisibleIndex index;
    index.groups = plan.groups;
    index.positions = plan.positions;
    index.group_offsets.reserve(static_cast<std::size_t>(plan.groups) + 1);
    index.group_offsets.push_back(0);
    for (int g = 0; g < plan.groups; ++g) {
        for (int i = 0; i < plan.positions; ++i) {
            if (!plan.is_masked(g, i)) {
                index.rows.push_back(g * plan.positions + i);
            }
        }
        index.group_offsets.push_back(static_cast<int>(index.rows.size()));
    }
    return index;
}

VisibleTokens apply_mask(const tokenizer::TokenGrid& grid, const MaskPlan& plan) {
    if (grid.groups != plan.groups || grid.positions != plan.positions ||
        grid.tokens.rows() != grid.token_count()) {
        throw std::invalid_argument("apply_mask: token grid and mask plan shapes differ");
    }
    VisibleTokens out;
    out.index = visible_index(plan);
    out.tokens.resize(out.index.count(), grid.tokens.cols());
    for (int k = 0; k < out.index.count(); ++k) {
        out.tokens.row(k) = grid.tokens.row(out.index.rows[static_cast<std::size_t>(k)]);
    }
    return out;
}

Mat scatter_visible(const VisibleTokens& visible, double sentinel) {
    const int n = visible.index.groups * visible.index.positions;
    Mat out = Mat::Constant(n, visible.tokens.cols(), sentinel);
    for (int k = 0; k < visible.index.count(); ++k) {
        out.row(visible.index.rows[static_cast<std::size_t>(k)]) = visible.tokens.row(k);
    }
    return out;
}

}  // namespace cyclemae::masking
