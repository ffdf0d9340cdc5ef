#include "doctest.h"

#include "../support/gradcheck.hpp"
#include "cyclemae/objective.hpp"
#include "cyclemae/video.hpp"

#include <cmath>

using namespace cyclemae;
using namespace cyclemae::objective;

namespace {

Mat random_symmetric(int n, Rng& rng) {
    Mat S = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            S(i, j) = S(j, i) = 2.0 * uniform_unit(rng);
        }
    }
    return S;
}

tokenizer::PatchGrid clip_for(const backbone::ModelConfig& cfg, int period, std::uint64_t seed) {
    video::SyntheticSpec spec;
    spec.frames = cfg.frames;
    spec.height = cfg.height;
    spec.width = cfg.width;
    spec.period = period;
    return tokenizer::patchify(video::generate_periodic_clip(spec, seed), cfg.patch);
}

backbone::ModelConfig eight_group_config() {
    backbone::ModelConfig cfg = testing::tiny_config();
    cfg.frames = 16;
    cfg.patch = {8, 8, 2, 8};
    return cfg;
}

}  // namespace

TEST_CASE("self-similarity is a bounded symmetric distance with zero diagonal") {
    Rng rng(1);
    Mat z(6, 5);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = standard_normal(rng);
    const Mat S = self_similarity(z);
    check_similarity_matrix(S);
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
            const RowVec a = z.row(i) / z.row(i).norm();
            const RowVec b = z.row(j) / z.row(j).norm();
            CHECK(S(i, j) == doctest::Approx((a - b).norm()).epsilon(1e-14));
            CHECK(S(i, j) >= 0.0);
            CHECK(S(i, j) <= 2.0 + 1e-15);
        }
    }
    Mat scaled = z;
    scaled.row(2) *= 7.0;
    CHECK((self_similarity(scaled) - S).cwiseAbs().maxCoeff() < 1e-14);
    z.row(3).setZero();
    CHECK_THROWS_AS(self_similarity(z), std::invalid_argument);
    CHECK_THROWS_AS(self_similarity(Mat::Ones(1, 3)), std::invalid_argument);
}

TEST_CASE("mining follows the threshold rule on a hand-built matrix") {
    // Row 0 distances: 0, .1, .9, .2, .8 -> threshold .5; P = {1, 3}; N = {2, 4}.
    Mat S = Mat::Zero(5, 5);
    const double row0[] = {0.0, 0.1, 0.9, 0.2, 0.8};
    for (int j = 0; j < 5; ++j) S(0, j) = S(j, 0) = row0[j];
    const AnchorCandidates c = anchor_candidates(S, 0, 1);
    CHECK(c.threshold == doctest::Approx(0.5));
    CHECK(c.positives == std::vector<int>{1, 3});
    CHECK(c.negatives == std::vector<int>{2, 4});
    // A window of 2 removes group 2 from the negatives.
    CHECK(anchor_candidates(S, 0, 2).negatives == std::vector<int>{4});
    // Adjacent high-distance groups are never negatives.
    Mat T = Mat::Zero(4, 4);
    T(0, 1) = T(1, 0) = 1.0;
    const AnchorCandidates d = anchor_candidates(T, 0, 1);
    CHECK(d.negatives.empty());
    Rng rng(0);
    const TripletSet set = mine_triplets(T, 1, rng);
    CHECK(set.skipped_anchors >= 1);
    CHECK_THROWS_AS(mine_triplets(Mat::Zero(2, 2), 1, rng), std::invalid_argument);
    CHECK_THROWS_AS(mine_triplets(T, 0, rng), std::invalid_argument);
}

TEST_CASE("mined triples satisfy the ordering invariants") {
    Rng gen(2);
    for (int trial = 0; trial < 200; ++trial) {
        const Mat S = random_symmetric(8, gen);
        Rng rng(static_cast<std::uint64_t>(trial));
        const TripletSet set = mine_triplets(S, 1, rng);
        CHECK(set.triples.size() + static_cast<std::size_t>(set.skipped_anchors) == 8);
        check_triplets(S, set);
        for (const Triplet& t : set.triples) {
            CHECK(S(t.anchor, t.positive) < S(t.anchor, t.negative));
        }
    }
}

TEST_CASE("triplet loss is the hinge on unit-normalised distances") {
    Mat z(3, 2);
    z << 1, 0, 0, 2, -3, 0;  // unit: (1,0), (0,1), (-1,0)
    TripletSet set;
    set.triples = {{0, 1, 2}};
    const double dap = std::sqrt(2.0);
    const double dan = 2.0;
    CHECK(triplet_loss(z, set, 0.5) == doctest::Approx(std::max(0.0, dap - dan + 0.5)));
    CHECK(triplet_loss(z, set, 1.0) == doctest::Approx(dap - dan + 1.0));
    set.triples = {{0, 2, 1}};
    CHECK(triplet_loss(z, set, 0.0) == doctest::Approx(dan - dap));
    Mat same = Mat::Ones(3, 2);
    set.triples = {{0, 1, 2}};
    CHECK(triplet_loss(same, set, 0.0) == 0.0);
    set.triples.clear();
    CHECK_THROWS_AS(triplet_loss(z, set, 0.5), std::invalid_argument);
    set.triples = {{0, 1, 3}};
    CHECK_THROWS_AS(triplet_loss(z, set, 0.5), std::out_of_range);
}

TEST_CASE("reconstruction loss only sees masked patches") {
    Rng rng(3);
    tokenizer::PatchGrid target{2, 4, 3, Mat(8, 6)};
    for (Eigen::Index i = 0; i < target.patches.size(); ++i) target.patches.data()[i] = uniform_unit(rng);
    tokenizer::PatchGrid pred = target;
    for (Eigen::Index i = 0; i < pred.patches.size(); ++i) pred.patches.data()[i] += 0.1 * standard_normal(rng);
    const masking::MaskPlan plan = masking::sample_uniform_frame_mask(2, 4, 0.5, rng);
    const double base = reconstruction_loss(pred, target, plan);

    double want = 0.0;
    int count = 0;
    for (int r = 0; r < 8; ++r) {
        if (plan.masked[static_cast<std::size_t>(r)]) {
            want += (pred.patches.row(r) - target.patches.row(r)).squaredNorm() / 6.0;
            ++count;
        }
    }
    CHECK(base == doctest::Approx(want / count).epsilon(1e-14));

    for (int r = 0; r < 8; ++r) {
        if (!plan.masked[static_cast<std::size_t>(r)]) {
            pred.patches.row(r).setConstant(1e6);
            target.patches.row(r).setConstant(-4.0);
        }
    }
    CHECK(reconstruction_loss(pred, target, plan) == base);
    CHECK_THROWS_AS(reconstruction_loss(pred, target, masking::full_visibility(2, 4)),
                    std::invalid_argument);
    CHECK(total_loss(0.25, 0.5) == 0.75);
    CHECK_THROWS_AS(total_loss(std::nan(""), 0.0), std::invalid_argument);
}

TEST_CASE("training step reports L_total = L_r + L_c and replays exactly") {
    const backbone::ModelConfig cfg = eight_group_config();
    const backbone::Model model = backbone::Model::init(cfg, 1);
    const tokenizer::PatchGrid clip = clip_for(cfg, 8, 2);
    ObjectiveConfig ocfg;
    ocfg.debug_checks = true;
    Rng rng(3);
    StepTrace trace;
    Gradients g(model.params());
    const LossReport r = training_step(model, clip, ocfg, rng, &g, &trace);
    CHECK(r.total == r.reconstruction + r.contrastive);
    CHECK(r.masked_patch_count == 8 * 12);
    CHECK(r.triplet_count + r.skipped_anchors == 8);
    CHECK(r.triplet_count == static_cast<int>(trace.triplets.triples.size()));
    for (int grp = 1; grp < 8; ++grp) {
        CHECK(trace.plan.row_masked_count(grp) == 12);
    }

    const LossReport again = replay_step(model, clip, ocfg, trace);
    CHECK(again.reconstruction == r.reconstruction);
    CHECK(again.contrastive == r.contrastive);

    // Independent recomputation of L_c from a consistent-mask encode per triple.
    double lc = 0.0;
    for (const Triplet& t : trace.triplets.triples) {
        const int partners[] = {t.positive, t.negative};
        const masking::MaskPlan c = masking::replicate_mask_rows(trace.plan, t.anchor, partners);
        const auto lat = backbone::encode(model, masking::apply_mask(backbone::embed(model, clip), c));
        const Mat z = backbone::project_frames(model, lat);
        TripletSet one;
        one.triples = {t};
        lc += triplet_loss(z, one, ocfg.alpha);
    }
    if (!trace.triplets.triples.empty()) {
        lc /= static_cast<double>(trace.triplets.triples.size());
    }
    CHECK(r.contrastive == doctest::Approx(lc).epsilon(1e-10));

    // Independent recomputation of L_r from the inference wrappers.
    const auto lat = backbone::encode(model, masking::apply_mask(backbone::embed(model, clip), trace.plan));
    const tokenizer::PatchGrid rec = backbone::reconstruct(model, lat, trace.plan);
    CHECK(r.reconstruction == doctest::Approx(reconstruction_loss(rec, clip, trace.plan)).epsilon(1e-10));
}

TEST_CASE("disabling the contrastive term zeroes L_c") {
    const backbone::ModelConfig cfg = eight_group_config();
    const backbone::Model model = backbone::Model::init(cfg, 1);
    const tokenizer::PatchGrid clip = clip_for(cfg, 8, 2);
    ObjectiveConfig ocfg;
    ocfg.enable_contrastive = false;
    Rng rng(3);
    const LossReport r = training_step(model, clip, ocfg, rng, nullptr);
    CHECK(r.contrastive == 0.0);
    CHECK(r.triplet_count == 0);
    CHECK(r.total == r.reconstruction);

    ocfg.enable_contrastive = true;
    Rng rng2(3);
    const LossReport with = training_step(model, clip, ocfg, rng2, nullptr);
    CHECK(with.reconstruction == r.reconstruction);
}

TEST_CASE("clips with fewer than three temporal groups skip mining") {
    const backbone::ModelConfig cfg = testing::tiny_config();
    const backbone::Model model = backbone::Model::init(cfg, 1);
    const tokenizer::PatchGrid clip = clip_for(cfg, 4, 2);
    Rng rng(1);
    const LossReport r = training_step(model, clip, ObjectiveConfig{}, rng, nullptr);
    CHECK(r.contrastive == 0.0);
    CHECK(r.skipped_anchors == 2);
}
