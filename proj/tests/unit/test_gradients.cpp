#include "doctest.h"

#include "../support/gradcheck.hpp"
#include "cyclemae/video.hpp"

using namespace cyclemae;

namespace {

tokenizer::PatchGrid clip_for(const backbone::ModelConfig& cfg, int period, std::uint64_t seed) {
    video::SyntheticSpec spec;
    spec.frames = cfg.frames;
    spec.height = cfg.height;
    spec.width = cfg.width;
    spec.period = period;
    return tokenizer::patchify(video::generate_periodic_clip(spec, seed), cfg.patch);
}

}  // namespace

TEST_CASE("tape gradients match central differences on the tiny model") {
    const backbone::ModelConfig cfg = testing::tiny_config();
    backbone::Model model = backbone::Model::init(cfg, 3);
    const tokenizer::PatchGrid clip = clip_for(cfg, 4, 11);
    objective::ObjectiveConfig ocfg;
    Rng rng(5);
    objective::StepTrace trace;
    objective::training_step(model, clip, ocfg, rng, nullptr, &trace);

    const auto r = testing::check_gradients(model, clip, ocfg, trace);
    INFO("worst " << r.worst_param << " " << r.worst_analytic << " vs " << r.worst_numeric);
    CHECK(r.checked == model.params().scalar_count());
    CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("contrastive path gradients match central differences") {
    backbone::ModelConfig cfg = testing::tiny_config();
    cfg.frames = 16;
    cfg.patch = {8, 8, 2, 8};
    backbone::Model model = backbone::Model::init(cfg, 4);
    const tokenizer::PatchGrid clip = clip_for(cfg, 8, 12);
    objective::ObjectiveConfig ocfg;
    ocfg.debug_checks = true;
    Rng rng(6);
    objective::StepTrace trace;
    objective::training_step(model, clip, ocfg, rng, nullptr, &trace);
    REQUIRE(!trace.triplets.triples.empty());

    const auto r = testing::check_gradients(model, clip, ocfg, trace);
    INFO("worst " << r.worst_param << " L_c " << r.contrastive);
    CHECK(r.contrastive > 0.0);
    CHECK(r.max_rel_error <= 1e-4);
}
