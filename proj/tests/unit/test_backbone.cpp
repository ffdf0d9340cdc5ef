#include "doctest.h"

#include "../support/gradcheck.hpp"
#include "cyclemae/backbone.hpp"
#include "cyclemae/video.hpp"

using namespace cyclemae;

namespace {

tokenizer::PatchGrid tiny_clip(const backbone::ModelConfig& cfg, std::uint64_t seed) {
    video::SyntheticSpec spec;
    spec.frames = cfg.frames;
    spec.height = cfg.height;
    spec.width = cfg.width;
    spec.period = 4;
    return tokenizer::patchify(video::generate_periodic_clip(spec, seed), cfg.patch);
}

}  // namespace

TEST_CASE("initialisation is deterministic and names parameters in layout order") {
    const backbone::ModelConfig cfg = testing::tiny_config();
    const backbone::Model a = backbone::Model::init(cfg, 5);
    const backbone::Model b = backbone::Model::init(cfg, 5);
    const backbone::Model c = backbone::Model::init(cfg, 6);
    CHECK(a.params().identical(b.params()));
    CHECK_FALSE(a.params().identical(c.params()));
    CHECK(a.params()[0].name == "patch_embed.weight");
    CHECK(a.params()[0].decay);
    CHECK(a.params().contains("encoder.blocks.0.attn.qkv.weight"));
    CHECK(a.params().contains("decoder.miss_token"));
    CHECK(a.params().contains("projector.cls_token"));
    CHECK_FALSE(a.params()[a.params().index_of("encoder.norm.bias")].decay);
}

TEST_CASE("from_params names the first mismatching tensor") {
    const backbone::ModelConfig cfg = testing::tiny_config();
    const backbone::Model a = backbone::Model::init(cfg, 5);
    backbone::ModelConfig wider = cfg;
    wider.patch.embed_dim = 12;
    CHECK_THROWS_WITH_AS(backbone::Model::from_params(wider, a.params()),
                         doctest::Contains("patch_embed.weight"), std::invalid_argument);
    CHECK_NOTHROW(backbone::Model::from_params(cfg, a.params()));

    backbone::ModelConfig bad = cfg;
    bad.enc_heads = 3;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("encoder output ignores the pixels of masked patches") {
    const backbone::ModelConfig cfg = testing::tiny_config();
    const backbone::Model model = backbone::Model::init(cfg, 2);
    tokenizer::PatchGrid grid = tiny_clip(cfg, 3);
    Rng rng(4);
    const masking::MaskPlan plan =
        masking::sample_uniform_frame_mask(grid.groups, grid.positions, 0.75, rng);
    const auto before = backbone::encode(model, masking::apply_mask(backbone::embed(model, grid), plan));
    for (int r = 0; r < grid.token_count(); ++r) {
        if (plan.masked[static_cast<std::size_t>(r)]) {
            grid.patches.row(r).setConstant(123.0);
        }
    }
    const auto after = backbone::encode(model, masking::apply_mask(backbone::embed(model, grid), plan));
    CHECK(before.latents == after.latents);
    CHECK(before.global == after.global);

    const tokenizer::PatchGrid rec = backbone::reconstruct(model, after, plan);
    CHECK(rec.patches.rows() == grid.token_count());
    CHECK(rec.patches.cols() == grid.patch_dim());
    const backbone::FrameEmbeddings z = backbone::project_frames(model, after);
    CHECK(z.rows() == grid.groups);
    CHECK(z.cols() == cfg.embed_dim());

    Rng other(99);
    const masking::MaskPlan plan2 =
        masking::sample_uniform_frame_mask(grid.groups, grid.positions, 0.75, other);
    if (plan2.masked != plan.masked) {
        CHECK_THROWS_AS(backbone::reconstruct(model, after, plan2), std::invalid_argument);
    }
}

TEST_CASE("graph builders and inference wrappers agree") {
    const backbone::ModelConfig cfg = testing::tiny_config();
    const backbone::Model model = backbone::Model::init(cfg, 8);
    const tokenizer::PatchGrid grid = tiny_clip(cfg, 9);
    Rng rng(10);
    const masking::MaskPlan plan =
        masking::sample_uniform_frame_mask(grid.groups, grid.positions, 0.5, rng);
    const auto lat = backbone::encode(model, masking::apply_mask(backbone::embed(model, grid), plan));

    ad::Tape tape(&model.params());
    const masking::VisibleIndex index = masking::visible_index(plan);
    const auto enc = backbone::encode(tape, model, backbone::embed_rows(tape, model, grid, index.rows));
    CHECK((tape.value(enc.latents) - lat.latents).cwiseAbs().maxCoeff() < 1e-12);
    const int groups[] = {1, 0};
    const ad::Var z = backbone::project_groups(tape, model, enc.latents, index, groups);
    const backbone::FrameEmbeddings all = backbone::project_frames(model, lat);
    CHECK((tape.value(z).row(0) - all.row(1)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((tape.value(z).row(1) - all.row(0)).cwiseAbs().maxCoeff() < 1e-12);
    const int empty_group[] = {5};
    CHECK_THROWS(backbone::project_groups(tape, model, enc.latents, index, empty_group));
}

TEST_CASE("stop_proj_grad blocks projector gradients into the encoder") {
    backbone::ModelConfig cfg = testing::tiny_config();
    cfg.stop_proj_grad = true;
    const backbone::Model model = backbone::Model::init(cfg, 8);
    const tokenizer::PatchGrid grid = tiny_clip(cfg, 9);
    const masking::MaskPlan plan = masking::full_visibility(grid.groups, grid.positions);
    const masking::VisibleIndex index = masking::visible_index(plan);
    ad::Tape tape(&model.params());
    const auto enc = backbone::encode(tape, model, backbone::embed_rows(tape, model, grid, index.rows));
    const int groups[] = {0, 1};
    const ad::Var z = backbone::project_groups(tape, model, enc.latents, index, groups);
    tape.backward(ad::row_distance(tape, z, 0, 1));
    Gradients g(model.params());
    tape.accumulate(g);
    CHECK(g[0].cwiseAbs().maxCoeff() == 0.0);
    CHECK(g[model.params().index_of("projector.cls_token")].cwiseAbs().maxCoeff() > 0.0);
}
